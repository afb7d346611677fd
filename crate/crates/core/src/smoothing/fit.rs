use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use super::basis::{basis_eval, penalty_matrix, BasisSpec};
use super::SmoothingError;
use crate::ingest::LogPanel;

/// Above this condition estimate the normal system is flagged as ill-conditioned.
pub const CONDITION_WARN: f64 = 1e12;

/// Condition estimates at or beyond `1/ε` are treated as numerically singular.
const SINGULAR_CONDITION: f64 = 1.0 / f64::EPSILON;

/// Penalized least-squares fit of every record in a panel.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothFit {
    pub basis: BasisSpec,
    pub labels: Vec<String>,
    /// K×n, column `i` holds the coefficients of record `i`.
    pub coefficients: DMatrix<f64>,
    pub lambda: f64,
    /// Trace of the smoothing operator, shared by all records.
    pub df: f64,
    pub sse: Vec<f64>,
    /// Per-record GCV; `None` when `df ≥ m` and the score is undefined.
    pub gcv: Option<Vec<f64>>,
    /// Number of sample points each record was fitted on.
    pub m: usize,
}

impl SmoothFit {
    pub fn n_records(&self) -> usize {
        self.coefficients.ncols()
    }
}

/// Cholesky factor of `ΦᵀΦ + λP` together with `ΦᵀΦ`.
pub(crate) struct NormalSystem {
    pub phi: DMatrix<f64>,
    pub gram: DMatrix<f64>,
    pub factor: Cholesky<f64, Dyn>,
}

impl NormalSystem {
    pub fn new(spec: &BasisSpec, grid: &[f64], lambda: f64) -> Result<Self, SmoothingError> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(SmoothingError::InvalidLambda(lambda));
        }
        if spec.size > grid.len() {
            return Err(SmoothingError::InvalidBasis(format!(
                "basis size {} exceeds sample count {}",
                spec.size,
                grid.len()
            )));
        }
        let phi = basis_eval(spec, grid)?;
        let gram = phi.tr_mul(&phi);
        let system = &gram + penalty_matrix(spec) * lambda;
        let condition = condition_estimate(&system);
        if condition >= SINGULAR_CONDITION {
            return Err(SmoothingError::Singular { condition });
        }
        let factor = Cholesky::new(system).ok_or(SmoothingError::Singular { condition })?;
        if condition > CONDITION_WARN {
            log::warn!(
                "normal system for K = {}, lambda = {lambda} has condition estimate {condition:e}",
                spec.size
            );
        }
        Ok(Self { phi, gram, factor })
    }

    pub fn df(&self) -> f64 {
        self.factor.solve(&self.gram).trace()
    }
}

fn condition_estimate(symmetric: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(symmetric.clone());
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Minimize `Σ_j (y_ij - f_i(t_j))² + λ ∫ (D²f_i)²` for every record.
pub fn fit_penalized(
    panel: &LogPanel,
    spec: &BasisSpec,
    lambda: f64,
) -> Result<SmoothFit, SmoothingError> {
    let system = NormalSystem::new(spec, &panel.day_grid, lambda)?;
    Ok(fit_with_system(panel, spec, lambda, &system))
}

pub(crate) fn fit_with_system(
    panel: &LogPanel,
    spec: &BasisSpec,
    lambda: f64,
    system: &NormalSystem,
) -> SmoothFit {
    let m = panel.n_days();
    // Φᵀ Yᵀ, one column per record
    let rhs = system.phi.tr_mul(&panel.values.transpose());
    let coefficients = system.factor.solve(&rhs);
    let fitted = &system.phi * &coefficients;

    let sse: Vec<f64> = (0..panel.n_units())
        .map(|i| {
            (0..m)
                .map(|j| (panel.values[(i, j)] - fitted[(j, i)]).powi(2))
                .sum()
        })
        .collect();
    let df = system.df();
    let gcv = sse
        .iter()
        .map(|&s| gcv_value(s, df, m))
        .collect::<Option<Vec<f64>>>();

    SmoothFit {
        basis: *spec,
        labels: panel.labels.clone(),
        coefficients,
        lambda,
        df,
        sse,
        gcv,
        m,
    }
}

/// `(sse/m) / (1 - df/m)²`, undefined when `df ≥ m`.
pub(crate) fn gcv_value(sse: f64, df: f64, m: usize) -> Option<f64> {
    let m = m as f64;
    if df >= m {
        return None;
    }
    Some((sse / m) / (1.0 - df / m).powi(2))
}

/// Effective degrees of freedom `trace((ΦᵀΦ + λP)⁻¹ ΦᵀΦ)`.
pub fn hat_df(spec: &BasisSpec, grid: &[f64], lambda: f64) -> Result<f64, SmoothingError> {
    Ok(NormalSystem::new(spec, grid, lambda)?.df())
}

/// Curve values `Φ_grid C`, returned as n×|grid| (one row per record).
pub fn evaluate_curves(fit: &SmoothFit, grid: &[f64]) -> Result<DMatrix<f64>, SmoothingError> {
    evaluate_coefficients(&fit.basis, &fit.coefficients, grid)
}

pub fn evaluate_coefficients(
    spec: &BasisSpec,
    coefficients: &DMatrix<f64>,
    grid: &[f64],
) -> Result<DMatrix<f64>, SmoothingError> {
    let phi = basis_eval(spec, grid)?;
    Ok((phi * coefficients).transpose())
}
