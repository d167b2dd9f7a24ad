//! Static risk measures (VaR, CVaR, EVaR, lower quantile) on finite
//! distributions, risk-level decompositions of these measures for finite
//! MDPs, and a brute-force oracle that checks which decompositions are
//! exact.

pub mod cli;
pub mod counterexamples;
pub mod decomp;
pub mod document;
mod error;
pub mod format;
pub mod mdp;
pub mod oracle;
pub mod risk;
pub mod suite;

pub use error::Error;
pub use mdp::{Mdp, MdpError};
pub use risk::{ExtendedValue, FiniteDistribution, Measure, RiskError, RiskLevel};
