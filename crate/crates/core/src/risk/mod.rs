//! Static risk measures on finite real-valued distributions.

mod distribution;
mod evar;
mod measures;
mod value;

use thiserror::Error;

pub use distribution::{FiniteDistribution, MASS_TOLERANCE};
pub use evar::{evar, evar_with, EvarOptions, EvarResult};
pub use measures::{cvar, kl_divergence, lower_quantile, var, PROB_TOLERANCE};
pub use value::{ExtendedValue, RiskLevel};

pub(crate) use measures::{cvar_sorted, tail_integral_sorted};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("distribution has no atoms")]
    EmptyDistribution,
    #[error("{outcomes} outcomes but {probabilities} probabilities")]
    LengthMismatch { outcomes: usize, probabilities: usize },
    #[error("non-finite outcome {0}")]
    NonFiniteOutcome(f64),
    #[error("bad probability mass: {0}")]
    BadMass(String),
    #[error("risk level {0} outside [0, 1]")]
    InvalidRiskLevel(f64),
    #[error("EVaR objective still increasing at beta = {beta:e}")]
    BracketFailure { beta: f64 },
    #[error("indeterminate sum of +inf and -inf")]
    IndeterminateSum,
}

/// The risk measures exposed through the oracle and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Var,
    Cvar,
    Evar,
    /// Lower quantile.
    Quantile,
}

impl Measure {
    pub fn apply(self, d: &FiniteDistribution, alpha: RiskLevel) -> Result<ExtendedValue, RiskError> {
        match self {
            Measure::Var => Ok(var(d, alpha)),
            Measure::Cvar => Ok(cvar(d, alpha)),
            Measure::Evar => evar(d, alpha),
            Measure::Quantile => Ok(lower_quantile(d, alpha)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Measure::Var => "var",
            Measure::Cvar => "cvar",
            Measure::Evar => "evar",
            Measure::Quantile => "quantile",
        }
    }
}

impl std::str::FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "var" => Ok(Measure::Var),
            "cvar" => Ok(Measure::Cvar),
            "evar" => Ok(Measure::Evar),
            "quantile" | "q" => Ok(Measure::Quantile),
            other => Err(format!("unknown measure '{other}'")),
        }
    }
}
