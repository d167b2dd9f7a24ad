use thiserror::Error;

use crate::counterexamples::CounterexampleError;
use crate::decomp::DecompError;
use crate::document::DocumentError;
use crate::mdp::MdpError;
use crate::risk::RiskError;

/// Any failure raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Decomp(#[from] DecompError),
    #[error(transparent)]
    Counterexample(#[from] CounterexampleError),
    #[error(transparent)]
    Document(#[from] DocumentError),
}
