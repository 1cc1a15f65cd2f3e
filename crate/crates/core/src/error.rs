use std::path::PathBuf;

use num_complex::Complex64;
use thiserror::Error;

use crate::lambert_w::Sign;

/// Errors produced by the numerical and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("Lambert W on branch {branch} did not converge: last iterate {last}, residual {residual:e}")]
    LambertNonConvergence {
        branch: i32,
        last: Complex64,
        residual: f64,
    },

    #[error("eigenvalue (k={branch}, {sign}) at beta={beta}: {source}")]
    Eigenvalue {
        branch: i32,
        sign: Sign,
        beta: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate mode: {0}")]
    DegenerateMode(String),

    #[error("degenerate parameters: {0}")]
    DegenerateParameters(String),

    #[error("mode with eigenvalue {lambda} is not normalizable on the real line (Re(r - 2 lambda) <= 0)")]
    NotNormalizable { lambda: Complex64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge: estimate {estimate}, error estimate {error:e}")]
    Quadrature { estimate: Complex64, error: f64 },

    #[error("rejection sampler exceeded {0} rejections")]
    RejectionCap(usize),

    #[error("laplacian envelope is singular near t = {time}")]
    EnvelopeSingularity { time: f64 },

    #[error("CFL condition violated: courant number {courant} > 1")]
    Cfl { courant: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("comparison window is empty: {0}")]
    EmptyWindow(String),

    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error at {}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("JSON error at {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Whether the error comes from bad user input rather than a numerical failure.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::InvalidParameter(_) | Error::Cfl { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
