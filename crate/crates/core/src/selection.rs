//! Subset selection on top of a pivoted decomposition.
//!
//! With `R = [R11 R12; 0 R22]` split after the first `k` pivots, the
//! remaining curves are approximated by `C P2 ≈ C P1 X` where `R11 X = R12`,
//! and the approximation residual is `‖R22‖_F`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::fqr::{permute_columns, r_values, relative_r_values, FunctionalMatrix, PivotedQr};
use crate::ingest::inverse_map;
use crate::smoothing::{evaluate_coefficients, SmoothingError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("k = {k} is outside 1..={n}")]
    InvalidK { k: usize, n: usize },
    #[error("R11 is singular at k = {k}: r[{index}][{index}] = {value}")]
    SingularR11 { k: usize, index: usize, value: f64 },
    #[error("all R values are zero")]
    AllZero,
    #[error("need at least two R values to look for a gap, got {0}")]
    TooFew(usize),
    #[error("{units} units but {populations} populations")]
    PopulationMismatch { units: usize, populations: usize },
    #[error("total population is zero")]
    ZeroPopulation,
    #[error("decomposition covers {qr} curves but the functional matrix has {fm}")]
    ShapeMismatch { qr: usize, fm: usize },
    #[error(transparent)]
    Smoothing(#[from] SmoothingError),
}

fn check_k(qr: &PivotedQr, k: usize) -> Result<(), SelectionError> {
    let n = qr.n_columns();
    if k == 0 || k > n {
        return Err(SelectionError::InvalidK { k, n });
    }
    Ok(())
}

/// Solve `R11 X = R12` by back substitution. `X` is k×(n−k) and relates the
/// factorized (possibly normalized) columns.
pub fn fit_remaining(qr: &PivotedQr, k: usize) -> Result<DMatrix<f64>, SelectionError> {
    check_k(qr, k)?;
    let n = qr.n_columns();
    if k == n {
        return Ok(DMatrix::zeros(k, 0));
    }
    if k > qr.steps() {
        let index = qr.steps();
        return Err(SelectionError::SingularR11 { k, index, value: 0.0 });
    }
    for i in 0..k {
        let value = qr.r[(i, i)];
        if value <= 0.0 {
            return Err(SelectionError::SingularR11 { k, index: i, value });
        }
    }
    let mut x = qr.r.view((0, k), (k, n - k)).clone_owned();
    for col in 0..(n - k) {
        for i in (0..k).rev() {
            let mut acc = x[(i, col)];
            for j in (i + 1)..k {
                acc -= qr.r[(i, j)] * x[(j, col)];
            }
            x[(i, col)] = acc / qr.r[(i, i)];
        }
    }
    Ok(x)
}

/// `X` rescaled to act on the unnormalized curves: `C P2 ≈ C P1 X_curves`.
pub fn curve_coefficients(qr: &PivotedQr, k: usize, x: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        let selected = qr.column_scale[qr.permutation[i]];
        let remaining = qr.column_scale[qr.permutation[k + j]];
        x[(i, j)] * remaining / selected
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub absolute: f64,
    pub relative: f64,
}

/// `‖R22‖_F` and `‖R22‖_F / ‖R‖_F`. By convention `k = 0` leaves the whole
/// matrix as residual.
pub fn residual_log(qr: &PivotedQr, k: usize) -> Residual {
    let total = qr.r.norm();
    let steps = qr.steps();
    let n = qr.n_columns();
    let absolute = if k >= steps || k >= n {
        0.0
    } else {
        qr.r.view((k, k), (steps - k, n - k)).norm()
    };
    let relative = if total > 0.0 {
        absolute / total
    } else if k == 0 {
        1.0
    } else {
        0.0
    };
    Residual { absolute, relative }
}

/// Reconstruct all curves from the first `k` pivots. Selected curves pass
/// through unchanged; output columns follow the original label order.
pub fn reconstruct(
    fm: &FunctionalMatrix,
    qr: &PivotedQr,
    k: usize,
) -> Result<FunctionalMatrix, SelectionError> {
    if fm.n_curves() != qr.n_columns() {
        return Err(SelectionError::ShapeMismatch {
            qr: qr.n_columns(),
            fm: fm.n_curves(),
        });
    }
    let x = curve_coefficients(qr, k, &fit_remaining(qr, k)?);
    let selected = permute_columns(&fm.coefficients, &qr.permutation[..k]);
    let approx = &selected * &x;
    let mut coefficients = fm.coefficients.clone();
    for (j, &orig) in qr.permutation[k..].iter().enumerate() {
        coefficients.set_column(orig, &approx.column(j));
    }
    Ok(FunctionalMatrix {
        basis: fm.basis,
        coefficients,
        labels: fm.labels.clone(),
    })
}

/// Relative RMS difference between original and reconstructed remaining
/// curves after mapping both back to the mortality domain.
pub fn residual_mortality(
    fm: &FunctionalMatrix,
    qr: &PivotedQr,
    k: usize,
    delta: f64,
    grid: &[f64],
) -> Result<f64, SelectionError> {
    let approx = reconstruct(fm, qr, k)?;
    let remaining = &qr.permutation[k..];
    if remaining.is_empty() {
        return Ok(0.0);
    }
    let pick = |c: &DMatrix<f64>| permute_columns(c, remaining);
    let original = inverse_map(&evaluate_coefficients(&fm.basis, &pick(&fm.coefficients), grid)?, delta);
    let rebuilt = inverse_map(
        &evaluate_coefficients(&fm.basis, &pick(&approx.coefficients), grid)?,
        delta,
    );
    let num = (&original - &rebuilt).norm();
    let den = original.norm();
    Ok(if den > 0.0 { num / den } else { num })
}

/// Gap heuristic: `argmax_j r_j / r_{j+1}` over `j = 1..n-1`, smaller `k` on ties.
pub fn suggest_k(r_values: &[f64]) -> Result<usize, SelectionError> {
    if r_values.len() < 2 {
        return Err(SelectionError::TooFew(r_values.len()));
    }
    let first = r_values[0];
    if !(first > 0.0) {
        return Err(SelectionError::AllZero);
    }
    let floor = f64::EPSILON * first;
    let mut best_k = 1;
    let mut best_ratio = f64::NEG_INFINITY;
    for (j, w) in r_values.windows(2).enumerate() {
        let ratio = w[0] / w[1].max(floor);
        if ratio > best_ratio {
            best_ratio = ratio;
            best_k = j + 1;
        }
    }
    Ok(best_k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceRow {
    pub unit: String,
    pub selected: bool,
    /// One coefficient per selected curve.
    pub raw: Vec<f64>,
    /// `sign(x)·x²` of `raw`.
    pub signed_square: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceTable {
    pub selected: Vec<String>,
    /// Selected units first, then the remaining units in pivot order.
    pub rows: Vec<InfluenceRow>,
}

pub fn signed_square(x: f64) -> f64 {
    x * x.abs()
}

pub fn influence_table(
    x: &DMatrix<f64>,
    selected_labels: &[String],
    remaining_labels: &[String],
) -> InfluenceTable {
    let k = selected_labels.len();
    debug_assert_eq!(x.nrows(), k);
    debug_assert_eq!(x.ncols(), remaining_labels.len());
    let row = |unit: &str, raw: Vec<f64>, selected: bool| InfluenceRow {
        unit: unit.to_string(),
        selected,
        signed_square: raw.iter().copied().map(signed_square).collect(),
        raw,
    };
    let mut rows: Vec<InfluenceRow> = selected_labels
        .iter()
        .enumerate()
        .map(|(i, label)| row(label, (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect(), true))
        .collect();
    rows.extend(
        remaining_labels
            .iter()
            .enumerate()
            .map(|(j, label)| row(label, x.column(j).iter().copied().collect(), false)),
    );
    InfluenceTable {
        selected: selected_labels.to_vec(),
        rows,
    }
}

/// Population-weighted mean of per-million rates, `Σ x_i pop_i / Σ pop_i`.
/// `curves` is n×m in the mortality domain.
pub fn national_curve(curves: &DMatrix<f64>, populations: &[u64]) -> Result<Vec<f64>, SelectionError> {
    if curves.nrows() != populations.len() {
        return Err(SelectionError::PopulationMismatch {
            units: curves.nrows(),
            populations: populations.len(),
        });
    }
    let total: f64 = populations.iter().map(|&p| p as f64).sum();
    if !(total > 0.0) {
        return Err(SelectionError::ZeroPopulation);
    }
    Ok((0..curves.ncols())
        .map(|j| {
            populations
                .iter()
                .enumerate()
                .map(|(i, &p)| curves[(i, j)] * p as f64)
                .sum::<f64>()
                / total
        })
        .collect())
}

/// Everything derived from a decomposition at a chosen `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub k: usize,
    pub selected_labels: Vec<String>,
    pub remaining_labels: Vec<String>,
    /// k×(n−k) coefficients expressing each remaining curve through the
    /// selected ones (unnormalized curves).
    pub x: DMatrix<f64>,
    pub r_values: Vec<f64>,
    pub r_values_relative: Vec<f64>,
    pub residual_log: Residual,
    pub residual_mortality: f64,
    pub influence: InfluenceTable,
}

pub fn select(
    fm: &FunctionalMatrix,
    qr: &PivotedQr,
    k: usize,
    delta: f64,
    grid: &[f64],
) -> Result<SelectionReport, SelectionError> {
    let x = curve_coefficients(qr, k, &fit_remaining(qr, k)?);
    let selected_labels = qr.labels[..k].to_vec();
    let remaining_labels = qr.labels[k..].to_vec();
    let influence = influence_table(&x, &selected_labels, &remaining_labels);
    Ok(SelectionReport {
        k,
        residual_log: residual_log(qr, k),
        residual_mortality: residual_mortality(fm, qr, k, delta, grid)?,
        r_values: r_values(qr),
        r_values_relative: relative_r_values(qr),
        selected_labels,
        remaining_labels,
        x,
        influence,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    pub rel_error_log: f64,
    pub rel_error_mortality: f64,
}

/// Residuals for every `k` that admits a fit: `1..=min(K, n)`, plus `n`.
pub fn error_sweep(
    fm: &FunctionalMatrix,
    qr: &PivotedQr,
    delta: f64,
    grid: &[f64],
) -> Result<Vec<SweepRow>, SelectionError> {
    let n = qr.n_columns();
    let mut ks: Vec<usize> = (1..=qr.steps().min(n)).collect();
    if ks.last() != Some(&n) {
        ks.push(n);
    }
    ks.into_par_iter()
        .map(|k| {
            let rel_error_mortality = match residual_mortality(fm, qr, k, delta, grid) {
                Ok(v) => v,
                // rank-deficient tail: fewer pivots already reproduce every curve
                Err(SelectionError::SingularR11 { .. }) if residual_log(qr, k).absolute == 0.0 => 0.0,
                Err(e) => return Err(e),
            };
            Ok(SweepRow {
                k,
                rel_error_log: residual_log(qr, k).relative,
                rel_error_mortality,
            })
        })
        .collect()
}
