//! Complex linear algebra, random sampling and least-squares primitives
//! shared by the simulator, the estimators and the network.

mod linalg;
mod matrix;
mod rng;

use thiserror::Error;

pub use linalg::{dft_matrix, ls_solve, principal_sqrt, PivotedQr, RANK_TOLERANCE};
pub use matrix::ComplexMatrix;
pub use num_complex::Complex64;
pub use rng::{sample_cn, SimRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("rank deficient system: effective rank {rank}, need {required}")]
    RankDeficient { rank: usize, required: usize },
    #[error("domain error: {0}")]
    Domain(String),
}

/// Converts power in dB to a linear ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
