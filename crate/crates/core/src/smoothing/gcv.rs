use rayon::prelude::*;

use super::basis::BasisSpec;
use super::fit::{fit_with_system, gcv_value, NormalSystem, SmoothFit};
use super::{Indexing, SmoothingError};
use crate::ingest::LogPanel;

/// Total GCV: `Σ_i (sse_i/m) / (1 - df/m)²`.
pub fn gcv_score(fit: &SmoothFit, m: usize) -> Result<f64, SmoothingError> {
    fit.sse
        .iter()
        .map(|&s| gcv_value(s, fit.df, m).ok_or(SmoothingError::DegenerateGcv { df: fit.df, m }))
        .sum()
}

/// `10^lo, 10^(lo+0.5), …, 10^hi`.
pub fn half_decade_grid(lo: f64, hi: f64) -> Vec<f64> {
    let steps = ((hi - lo) * 2.0).round().max(0.0) as usize;
    (0..=steps)
        .map(|s| 10f64.powf(lo + 0.5 * s as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcvPoint {
    pub k: usize,
    pub lambda: f64,
    /// `Err` carries the reason the point could not be scored.
    pub total_gcv: Result<f64, SmoothingError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearch {
    pub best_k: usize,
    pub best_lambda: f64,
    pub best_score: f64,
    /// Every grid point, ordered by K then λ as given.
    pub table: Vec<GcvPoint>,
}

impl GridSearch {
    /// Scores along λ for a fixed K, skipping failed points.
    pub fn lambda_trace(&self, k: usize) -> Vec<(f64, f64)> {
        self.table
            .iter()
            .filter(|p| p.k == k)
            .filter_map(|p| p.total_gcv.as_ref().ok().map(|&s| (p.lambda, s)))
            .collect()
    }

    /// Scores along K for a fixed λ, skipping failed points.
    pub fn k_trace(&self, lambda: f64) -> Vec<(usize, f64)> {
        self.table
            .iter()
            .filter(|p| p.lambda == lambda)
            .filter_map(|p| p.total_gcv.as_ref().ok().map(|&s| (p.k, s)))
            .collect()
    }
}

/// Minimize total GCV over `K × λ`. The domain length is taken from the
/// last grid time. Ties go to the smaller K, then the smaller λ.
pub fn grid_search(
    panel: &LogPanel,
    ks: &[usize],
    lambdas: &[f64],
    indexing: Indexing,
) -> Result<GridSearch, SmoothingError> {
    if ks.is_empty() || lambdas.is_empty() {
        return Err(SmoothingError::EmptyGrid);
    }
    let domain = panel.day_grid.last().copied().unwrap_or(0.0);
    let m = panel.n_days();

    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let mut lambdas = lambdas.to_vec();
    lambdas.sort_by(|a, b| a.total_cmp(b));
    lambdas.dedup();

    let points: Vec<(usize, f64)> = ks
        .iter()
        .flat_map(|&k| lambdas.iter().map(move |&l| (k, l)))
        .collect();

    let table: Vec<GcvPoint> = points
        .par_iter()
        .map(|&(k, lambda)| {
            let total_gcv = BasisSpec::fourier_cosine(k, domain, indexing)
                .and_then(|spec| {
                    let system = NormalSystem::new(&spec, &panel.day_grid, lambda)?;
                    Ok(fit_with_system(panel, &spec, lambda, &system))
                })
                .and_then(|fit| gcv_score(&fit, m));
            GcvPoint {
                k,
                lambda,
                total_gcv,
            }
        })
        .collect();

    let mut best: Option<(usize, f64, f64)> = None;
    for point in &table {
        if let Ok(score) = point.total_gcv {
            if !score.is_finite() {
                continue;
            }
            // table is ordered by (K, λ) ascending, so strict < keeps the earliest tie
            if best.is_none_or(|(_, _, s)| score < s) {
                best = Some((point.k, point.lambda, score));
            }
        }
    }
    let (best_k, best_lambda, best_score) = best.ok_or(SmoothingError::AllFitsFailed)?;
    Ok(GridSearch {
        best_k,
        best_lambda,
        best_score,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn fit_with(sse: Vec<f64>, df: f64) -> SmoothFit {
        let n = sse.len();
        SmoothFit {
            basis: BasisSpec::fourier_cosine(1, 1.0, Indexing::Standard).unwrap(),
            labels: (0..n).map(|i| i.to_string()).collect(),
            coefficients: DMatrix::zeros(1, n),
            lambda: 0.0,
            df,
            sse,
            gcv: None,
            m: 100,
        }
    }

    #[test]
    fn gcv_formula() {
        assert_eq!(gcv_score(&fit_with(vec![0.0], 3.0), 100).unwrap(), 0.0);
        assert_eq!(gcv_score(&fit_with(vec![100.0], 0.0), 100).unwrap(), 1.0);
        let two = gcv_score(&fit_with(vec![100.0, 50.0], 50.0), 100).unwrap();
        assert!((two - (1.0 / 0.25 + 0.5 / 0.25)).abs() < 1e-12);
        assert!(matches!(
            gcv_score(&fit_with(vec![1.0], 100.0), 100),
            Err(SmoothingError::DegenerateGcv { .. })
        ));
    }

    #[test]
    fn half_decades() {
        let grid = half_decade_grid(0.0, 6.0);
        assert_eq!(grid.len(), 13);
        assert_eq!(grid[0], 1.0);
        assert!((grid[7] - 10f64.powf(3.5)).abs() < 1e-9);
        assert_eq!(grid[12], 1e6);
    }

    #[test]
    fn single_point_grid() {
        let m = 30;
        let panel = LogPanel {
            labels: vec!["A".into()],
            values: DMatrix::from_fn(1, m, |_, j| (j as f64 * 0.2).cos()),
            day_grid: (0..m).map(|j| j as f64).collect(),
            delta: 0.01,
        };
        let search = grid_search(&panel, &[6], &[10.0], Indexing::Standard).unwrap();
        assert_eq!(search.best_k, 6);
        assert_eq!(search.best_lambda, 10.0);
        assert_eq!(search.table.len(), 1);
        assert!(grid_search(&panel, &[], &[1.0], Indexing::Standard).is_err());
    }

    #[test]
    fn failed_points_are_kept_in_table() {
        let m = 10;
        let panel = LogPanel {
            labels: vec!["A".into()],
            values: DMatrix::from_fn(1, m, |_, j| j as f64),
            day_grid: (0..m).map(|j| j as f64).collect(),
            delta: 0.01,
        };
        let search = grid_search(&panel, &[3, 12], &[1.0], Indexing::Standard).unwrap();
        assert_eq!(search.table.len(), 2);
        assert!(search.table[1].total_gcv.is_err());
        assert_eq!(search.best_k, 3);
    }
}
