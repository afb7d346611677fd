//! Penalized basis smoothing of log-domain panels.
//!
//! Each record is represented as `f_i(t) = Σ_k c_ik g_k(t)` in a truncated
//! Fourier cosine basis, with coefficients minimizing the residual sum of
//! squares plus `λ ∫ (D²f_i)²`. The basis size and `λ` are chosen by
//! minimizing the total generalized cross validation score.

mod basis;
mod fit;
mod gcv;

use thiserror::Error;

pub use basis::{basis_eval, penalty_matrix, BasisKind, BasisSpec, Indexing};
pub use fit::{evaluate_coefficients, evaluate_curves, fit_penalized, hat_df, SmoothFit, CONDITION_WARN};
pub use gcv::{gcv_score, grid_search, half_decade_grid, GcvPoint, GridSearch};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmoothingError {
    #[error("invalid basis: {0}")]
    InvalidBasis(String),
    #[error("roughness penalty must be finite and nonnegative, got {0}")]
    InvalidLambda(f64),
    #[error("time {t} lies outside the basis domain [0, {domain}]")]
    OutOfDomain { t: f64, domain: f64 },
    #[error("normal system is singular (condition estimate {condition:e})")]
    Singular { condition: f64 },
    #[error("GCV undefined: df = {df} is not below the sample count {m}")]
    DegenerateGcv { df: f64, m: usize },
    #[error("empty search grid")]
    EmptyGrid,
    #[error("every grid point failed to fit")]
    AllFitsFailed,
}
