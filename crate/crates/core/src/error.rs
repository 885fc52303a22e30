use thiserror::Error;

use crate::inverse::InverseSolution;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum PumpError {
    /// |R| fell below the gap-closure guard.
    #[error("gap closure: |R| = {norm:.3e} below guard at k = {k:.6}, t = {t:.6}")]
    GapClosure { norm: f64, k: f64, t: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("propagation failed at step {step}: {reason}")]
    Propagation { step: usize, reason: String },

    /// Raw Chern integral is too far from an integer, or the two routes disagree.
    #[error("quantization failure: triple-product {raw:.6}, plaquette {plaquette:.6}")]
    Quantization { raw: f64, plaquette: f64 },

    #[error("construction error: {0}")]
    Construction(String),

    #[error("optimizer did not converge: E/N_k = {per_k:.3e} after {iterations} iterations")]
    NotConverged {
        per_k: f64,
        iterations: usize,
        solution: Box<InverseSolution>,
    },

    #[error("reconstructed H0 is not gapped: margin {margin:.3e} below {required:.3e}")]
    GapViolation {
        margin: f64,
        required: f64,
        solution: Option<Box<InverseSolution>>,
    },

    #[error("reconstructed pumped charge {charge:.6} is not within 0.1 of an integer")]
    NotQuantized { charge: f64, solution: Box<InverseSolution> },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PumpError>;
