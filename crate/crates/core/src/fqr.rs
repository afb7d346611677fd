//! Functional QR decomposition with column pivoting.
//!
//! For curves `A = G C` expanded in an orthonormal basis `G`, the functional
//! factorization `A P = Q R` reduces to the discrete factorization
//! `C P = B R` of the coefficient matrix, with `Q = G B`. Inner products of
//! curves are plain dot products of their coefficient vectors.
//!
//! The factorization uses Householder reflections. At each step the pivot is
//! the remaining column whose component orthogonal to the already selected
//! columns is largest; ties, up to a relative [`TIE_TOLERANCE`], go to the
//! lowest original index.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::smoothing::{BasisSpec, SmoothFit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QrError {
    #[error("curves are expanded in different bases")]
    BasisMismatch,
    #[error("coefficient vectors have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("coefficient matrix has {columns} columns but {labels} labels")]
    LabelMismatch { columns: usize, labels: usize },
    #[error("matrix has no columns")]
    Empty,
    #[error("column {index} ({label}) has zero norm and cannot be normalized")]
    ZeroColumn { index: usize, label: String },
    #[error("coefficient matrix has {rows} rows but the basis has {size} functions")]
    BasisSizeMismatch { rows: usize, size: usize },
}

/// Residual norms within this relative distance of the largest count as
/// tied; ties go to the lowest original column index.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// A set of `n` curves sharing one basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalMatrix {
    pub basis: BasisSpec,
    /// K×n.
    pub coefficients: DMatrix<f64>,
    pub labels: Vec<String>,
}

impl FunctionalMatrix {
    pub fn new(basis: BasisSpec, coefficients: DMatrix<f64>, labels: Vec<String>) -> Result<Self, QrError> {
        if coefficients.ncols() != labels.len() {
            return Err(QrError::LabelMismatch {
                columns: coefficients.ncols(),
                labels: labels.len(),
            });
        }
        if coefficients.nrows() != basis.size {
            return Err(QrError::BasisSizeMismatch {
                rows: coefficients.nrows(),
                size: basis.size,
            });
        }
        Ok(Self {
            basis,
            coefficients,
            labels,
        })
    }

    pub fn from_fit(fit: &SmoothFit) -> Self {
        Self {
            basis: fit.basis,
            coefficients: fit.coefficients.clone(),
            labels: fit.labels.clone(),
        }
    }

    pub fn n_curves(&self) -> usize {
        self.coefficients.ncols()
    }

    /// `⟨f_i, f_j⟩` over `[0, T]`.
    pub fn inner(&self, i: usize, j: usize) -> f64 {
        self.coefficients.column(i).dot(&self.coefficients.column(j))
    }
}

/// `∫ f g dt` for two curves given by coefficients in orthonormal bases.
pub fn inner_product(
    basis_a: &BasisSpec,
    a: &[f64],
    basis_b: &BasisSpec,
    b: &[f64],
) -> Result<f64, QrError> {
    if basis_a != basis_b {
        return Err(QrError::BasisMismatch);
    }
    if a.len() != b.len() {
        return Err(QrError::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

/// Result of [`qrp`]: `C D⁻¹ P = B R`, where `D` holds the column scales
/// (all ones unless normalization was requested).
#[derive(Debug, Clone, PartialEq)]
pub struct PivotedQr {
    /// `permutation[k]` is the original column placed at position `k`.
    pub permutation: Vec<usize>,
    /// K×p with orthonormal columns, `p = min(K, n)`.
    pub q_coefficients: DMatrix<f64>,
    /// p×n upper triangular with nonnegative, nonincreasing diagonal.
    pub r: DMatrix<f64>,
    /// Labels in pivot order.
    pub labels: Vec<String>,
    /// Norm each original column was divided by before factorization.
    pub column_scale: Vec<f64>,
    pub normalized: bool,
}

impl PivotedQr {
    pub fn n_columns(&self) -> usize {
        self.r.ncols()
    }

    /// Number of Householder steps, `min(K, n)`.
    pub fn steps(&self) -> usize {
        self.r.nrows()
    }

    /// The matrix that was actually factorized, `C D⁻¹`, in original order.
    pub fn factored_matrix(&self, fm: &FunctionalMatrix) -> DMatrix<f64> {
        let mut scaled = fm.coefficients.clone();
        for (j, &s) in self.column_scale.iter().enumerate() {
            scaled.column_mut(j).unscale_mut(s);
        }
        scaled
    }
}

/// Householder QR with column pivoting of the coefficient matrix.
pub fn qrp(fm: &FunctionalMatrix, normalize: bool) -> Result<PivotedQr, QrError> {
    let rows = fm.coefficients.nrows();
    let n = fm.n_curves();
    if n == 0 {
        return Err(QrError::Empty);
    }

    let column_scale: Vec<f64> = if normalize {
        (0..n)
            .map(|j| {
                let norm = fm.coefficients.column(j).norm();
                if norm > 0.0 && norm.is_finite() {
                    Ok(norm)
                } else {
                    Err(QrError::ZeroColumn {
                        index: j,
                        label: fm.labels[j].clone(),
                    })
                }
            })
            .collect::<Result<_, _>>()?
    } else {
        vec![1.0; n]
    };

    let mut work = fm.coefficients.clone();
    for (j, &s) in column_scale.iter().enumerate() {
        work.column_mut(j).unscale_mut(s);
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let steps = rows.min(n);
    let mut reflectors: Vec<Option<DVector<f64>>> = Vec::with_capacity(steps);

    for k in 0..steps {
        // residual norms are recomputed rather than downdated
        let norms: Vec<f64> = (k..n).map(|j| work.column(j).rows(k, rows - k).norm()).collect();
        let best = norms.iter().cloned().fold(0.0, f64::max);
        let cutoff = best * (1.0 - TIE_TOLERANCE);
        let pivot = (k..n)
            .filter(|&j| norms[j - k] >= cutoff)
            .min_by_key(|&j| perm[j])
            .expect("at least one candidate");
        if pivot != k {
            work.swap_columns(k, pivot);
            perm.swap(k, pivot);
        }

        let x = work.column(k).rows(k, rows - k).clone_owned();
        let norm = x.norm();
        if norm == 0.0 {
            reflectors.push(None);
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x;
        v[0] -= alpha;
        let vnorm2 = v.norm_squared();
        for j in k..n {
            let mut col = work.column_mut(j);
            let mut col = col.rows_mut(k, rows - k);
            let s = 2.0 * v.dot(&col) / vnorm2;
            col.axpy(-s, &v, 1.0);
        }
        // exact zeros below the diagonal
        work[(k, k)] = alpha;
        for i in (k + 1)..rows {
            work[(i, k)] = 0.0;
        }
        reflectors.push(Some(v));
    }

    // entries below the diagonal were zeroed during elimination
    let mut r = work.rows(0, steps).clone_owned();
    let mut q = DMatrix::<f64>::identity(rows, steps);
    for (k, v) in reflectors.iter().enumerate().rev() {
        if let Some(v) = v {
            let vnorm2 = v.norm_squared();
            for j in 0..steps {
                let mut col = q.column_mut(j);
                let mut col = col.rows_mut(k, rows - k);
                let s = 2.0 * v.dot(&col) / vnorm2;
                col.axpy(-s, v, 1.0);
            }
        }
    }
    for k in 0..steps {
        if r[(k, k)] < 0.0 {
            r.row_mut(k).neg_mut();
            q.column_mut(k).neg_mut();
        }
    }

    Ok(PivotedQr {
        labels: perm.iter().map(|&j| fm.labels[j].clone()).collect(),
        permutation: perm,
        q_coefficients: q,
        r,
        column_scale,
        normalized: normalize,
    })
}

/// Diagonal of R ("R values"), length `min(K, n)`.
pub fn r_values(qr: &PivotedQr) -> Vec<f64> {
    (0..qr.steps()).map(|k| qr.r[(k, k)]).collect()
}

/// R values divided by `‖R‖_F`.
pub fn relative_r_values(qr: &PivotedQr) -> Vec<f64> {
    let total = qr.r.norm();
    r_values(qr)
        .into_iter()
        .map(|v| if total > 0.0 { v / total } else { 0.0 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    /// `‖C D⁻¹ P - B R‖_F / ‖C D⁻¹‖_F`.
    pub factorization_residual: f64,
    /// `‖BᵀB - I‖_max`.
    pub orthonormality_defect: f64,
    pub diagonal_nonincreasing: bool,
    pub diagonal_nonnegative: bool,
}

/// Check a decomposition against the curves it was computed from.
pub fn verify(qr: &PivotedQr, fm: &FunctionalMatrix) -> Diagnostics {
    let scaled = qr.factored_matrix(fm);
    let permuted = permute_columns(&scaled, &qr.permutation);
    let reconstructed = &qr.q_coefficients * &qr.r;
    let denom = scaled.norm();
    let diff = (permuted - reconstructed).norm();
    let factorization_residual = if denom > 0.0 { diff / denom } else { diff };

    let steps = qr.steps();
    let gram = qr.q_coefficients.tr_mul(&qr.q_coefficients) - DMatrix::<f64>::identity(steps, steps);
    let orthonormality_defect = gram.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));

    let diag = r_values(qr);
    let slack = 1e-12 * diag.first().copied().unwrap_or(0.0).abs();
    Diagnostics {
        factorization_residual,
        orthonormality_defect,
        diagonal_nonincreasing: diag.windows(2).all(|w| w[1] <= w[0] + slack),
        diagonal_nonnegative: diag.iter().all(|&v| v >= 0.0),
    }
}

pub(crate) fn permute_columns(matrix: &DMatrix<f64>, order: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(matrix.nrows(), order.len(), |i, j| matrix[(i, order[j])])
}
