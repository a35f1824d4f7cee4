//! Error type shared across the solver stack.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unsupported dimension {0}: odd n >= 3 required")]
    UnsupportedDimension(usize),

    #[error("argument out of domain: {0}")]
    OutOfDomain(String),

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("spectral parameter outside the admissible sector: k = {0}")]
    BadSpectralParameter(String),

    #[error("weighted Wronskian degenerate (|W| rel = {0:.3e}); aborting")]
    DegenerateWronskian(f64),

    #[error("zonal series truncation failure: relative tail {tail:.3e} exceeds {tol:.3e}")]
    Truncation { tail: f64, tol: f64 },

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("fit rejected: {0}")]
    Fit(String),
}

pub type Result<T> = std::result::Result<T, Error>;
