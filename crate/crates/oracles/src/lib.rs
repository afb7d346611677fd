//! Reference computations for the funcqr test suites.
//!
//! Everything here is written from the defining formulas with no shared code
//! paths into the library under test: trapezoid quadrature, finite
//! differences, explicit hat matrices built from a full inverse, classical
//! Gram–Schmidt with pivoting, and projection residuals from an SVD least
//! squares solve. Synthetic panels with known structure live here too.

use std::f64::consts::PI;

use chrono::{Days, NaiveDate};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Composite trapezoid rule for `f` on `[a, b]` with `intervals` panels.
pub fn trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    let mut sum = 0.5 * (f(a) + f(b));
    for i in 1..intervals {
        sum += f(a + h * i as f64);
    }
    sum * h
}

/// Trapezoid rule over equally spaced samples.
pub fn trapezoid_samples(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..n - 1].iter().sum();
    h * (inner + 0.5 * (values[0] + values[n - 1]))
}

/// Fourth-order central difference for the second derivative.
pub fn second_difference<F: Fn(f64) -> f64>(f: &F, t: f64, h: f64) -> f64 {
    (-f(t + 2.0 * h) + 16.0 * f(t + h) - 30.0 * f(t) + 16.0 * f(t - h) - f(t - 2.0 * h)) / (12.0 * h * h)
}

/// Cosine basis written out directly: `1/√T`, then `√(2/T) cos(w t)` with
/// `w = (k + shift) π / T` for zero-based `k ≥ 1`. `shift = 0` is the
/// standard indexing, `shift = 1` skips the fundamental.
pub fn cosine_basis(k: usize, t: f64, domain: f64, shift: usize) -> f64 {
    if k == 0 {
        1.0 / domain.sqrt()
    } else {
        (2.0 / domain).sqrt() * (((k + shift) as f64) * PI * t / domain).cos()
    }
}

/// Smoothing matrix `Φ (ΦᵀΦ + λP)⁻¹ Φᵀ`, formed with an explicit inverse.
pub fn explicit_hat_matrix(phi: &DMatrix<f64>, penalty: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let system = phi.transpose() * phi + penalty * lambda;
    let inverse = system.try_inverse().expect("invertible normal system");
    phi * inverse * phi.transpose()
}

/// Total GCV over the rows of `y` (n×m) through the explicit hat matrix.
pub fn explicit_total_gcv(y: &DMatrix<f64>, phi: &DMatrix<f64>, penalty: &DMatrix<f64>, lambda: f64) -> f64 {
    let hat = explicit_hat_matrix(phi, penalty, lambda);
    let m = y.ncols() as f64;
    let df = hat.trace();
    (0..y.nrows())
        .map(|i| {
            let row: DVector<f64> = y.row(i).transpose();
            let resid = &row - &hat * &row;
            (resid.norm_squared() / m) / (1.0 - df / m).powi(2)
        })
        .sum()
}

/// Classical Gram–Schmidt with pivoting, in coefficient space.
///
/// At step `k` every unselected column is orthogonalized against the
/// selected directions, and the one with the largest residual norm becomes
/// `u_k`; exact ties go to the lowest index. Returns `(order, Q, R)` with
/// `q_k = u_k / ‖u_k‖` and `R[k][j] = ⟨q_k, f_order[j]⟩`.
pub fn gram_schmidt_pivoted(c: &DMatrix<f64>) -> (Vec<usize>, DMatrix<f64>, DMatrix<f64>) {
    let (rows, n) = c.shape();
    let steps = rows.min(n);
    let mut order: Vec<usize> = Vec::with_capacity(n);
    let mut qs: Vec<DVector<f64>> = Vec::with_capacity(steps);
    let mut remaining: Vec<usize> = (0..n).collect();

    for _ in 0..steps {
        let mut best: Option<(usize, f64, DVector<f64>)> = None;
        for (pos, &j) in remaining.iter().enumerate() {
            let f = c.column(j).clone_owned();
            let mut u = f.clone();
            for q in &qs {
                // proj_{u_i} f = <f, u_i> u_i / ‖u_i‖² with u_i = ‖u_i‖ q_i
                u -= q * f.dot(q);
            }
            let norm = u.norm();
            if best.as_ref().is_none_or(|(_, b, _)| norm > *b) {
                best = Some((pos, norm, u));
            }
        }
        let (pos, norm, u) = best.expect("columns remain");
        let j = remaining.remove(pos);
        order.push(j);
        qs.push(if norm > 0.0 { u / norm } else { DVector::zeros(rows) });
    }
    order.extend(remaining);

    let q = DMatrix::from_columns(&qs);
    let r = DMatrix::from_fn(steps, n, |k, j| {
        if j < k {
            0.0
        } else {
            qs[k].dot(&c.column(order[j]))
        }
    });
    (order, q, r)
}

/// `‖(I - Π) c_j‖` where `Π` projects onto the span of the `selected`
/// columns, computed from an SVD least-squares fit.
pub fn projection_residual(c: &DMatrix<f64>, selected: &[usize], j: usize) -> f64 {
    let target = c.column(j).clone_owned();
    if selected.is_empty() {
        return target.norm();
    }
    let basis = DMatrix::from_columns(&selected.iter().map(|&s| c.column(s)).collect::<Vec<_>>());
    let coef = basis
        .clone()
        .svd(true, true)
        .solve(&target, 1e-13)
        .expect("svd solve");
    (target - basis * coef).norm()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Matrix with independent standard normal entries.
pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    DMatrix::from_fn(rows, cols, |_, _| normal.sample(rng))
}

fn bump(t: f64, center: f64, width: f64) -> f64 {
    (-((t - center) / width).powi(2)).exp()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Three log10-mortality shapes on `[0, domain]`: two waves, an early
/// single peak, and an early peak followed by a late surge.
pub fn template(index: usize, t: f64, domain: f64) -> f64 {
    let s = t / domain * 324.0;
    match index {
        0 => -1.2 + 1.3 * bump(s, 145.0, 35.0) + 1.1 * bump(s, 275.0, 25.0),
        1 => -1.5 + 2.0 * bump(s, 75.0, 20.0),
        2 => -1.0 + 1.4 * bump(s, 51.0, 15.0) + 2.0 * sigmoid((s - 290.0) / 10.0),
        _ => panic!("template index {index} out of range"),
    }
}

/// Log-domain panel built from the three templates.
pub struct TemplatePanel {
    /// n×m log-domain samples including noise.
    pub values: DMatrix<f64>,
    /// n×3 nonnegative mixing weights.
    pub weights: DMatrix<f64>,
    /// Template with the largest weight for each unit.
    pub carrier: Vec<usize>,
    pub day_grid: Vec<f64>,
}

/// `n` curves, each a positive combination of the templates dominated by
/// template `i mod 3`, plus Gaussian noise with standard deviation
/// `noise_fraction` times the curve's own RMS.
pub fn template_panel(seed: u64, n: usize, m: usize, noise_fraction: f64) -> TemplatePanel {
    let mut rng = rng(seed);
    let domain = (m - 1) as f64;
    let day_grid: Vec<f64> = (0..m).map(|j| j as f64).collect();
    let mut weights = DMatrix::zeros(n, 3);
    for i in 0..n {
        for t in 0..3 {
            weights[(i, t)] = if t == i % 3 {
                rng.random_range(0.8..1.2)
            } else {
                rng.random_range(0.0..0.25)
            };
        }
    }
    let mut values = DMatrix::zeros(n, m);
    let standard = Normal::new(0.0, 1.0).unwrap();
    for i in 0..n {
        let clean: Vec<f64> = day_grid
            .iter()
            .map(|&t| (0..3).map(|k| weights[(i, k)] * template(k, t, domain)).sum())
            .collect();
        let rms = (clean.iter().map(|v| v * v).sum::<f64>() / m as f64).sqrt();
        for (j, v) in clean.into_iter().enumerate() {
            values[(i, j)] = v + noise_fraction * rms * standard.sample(&mut rng);
        }
    }
    TemplatePanel {
        carrier: (0..n).map(|i| i % 3).collect(),
        values,
        weights,
        day_grid,
    }
}

/// `n` curves drawn from the first `k` standard cosine functions with
/// random coefficients, plus white noise of standard deviation `sigma`.
pub fn cosine_panel(seed: u64, k: usize, n: usize, m: usize, sigma: f64) -> DMatrix<f64> {
    let mut rng = rng(seed);
    let domain = (m - 1) as f64;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let coef = DMatrix::from_fn(k, n, |_, _| 10.0 * normal.sample(&mut rng));
    DMatrix::from_fn(n, m, |i, j| {
        let t = j as f64;
        let clean: f64 = (0..k).map(|b| coef[(b, i)] * cosine_basis(b, t, domain, 0)).sum();
        clean + sigma * normal.sample(&mut rng)
    })
}

const STATES: [(&str, &str, &str); 27] = [
    ("AC", "Acre", "North"),
    ("AL", "Alagoas", "Northeast"),
    ("AM", "Amazonas", "North"),
    ("AP", "Amapa", "North"),
    ("BA", "Bahia", "Northeast"),
    ("CE", "Ceara", "Northeast"),
    ("DF", "Federal District", "Central-West"),
    ("ES", "Espirito Santo", "Southeast"),
    ("GO", "Goias", "Central-West"),
    ("MA", "Maranhao", "Northeast"),
    ("MG", "Minas Gerais", "Southeast"),
    ("MS", "Mato Grosso do Sul", "Central-West"),
    ("MT", "Mato Grosso", "Central-West"),
    ("PA", "Para", "North"),
    ("PB", "Paraiba", "Northeast"),
    ("PE", "Pernambuco", "Northeast"),
    ("PI", "Piaui", "Northeast"),
    ("PR", "Parana", "South"),
    ("RJ", "Rio de Janeiro", "Southeast"),
    ("RN", "Rio Grande do Norte", "Northeast"),
    ("RO", "Rondonia", "North"),
    ("RR", "Roraima", "North"),
    ("RS", "Rio Grande do Sul", "South"),
    ("SC", "Santa Catarina", "South"),
    ("SE", "Sergipe", "Northeast"),
    ("SP", "Sao Paulo", "Southeast"),
    ("TO", "Tocantins", "North"),
];

/// Long-format death-count CSV for `n ≤ 27` units whose aligned log
/// mortality follows [`template_panel`] at `m` days.
///
/// Units start reporting at staggered dates, run a few days past `m`
/// except for one unit that is exactly `m` long, and carry a handful of
/// negative corrections for the repair step to remove. Corrections follow
/// a day with at least three deaths so a single averaging removes them.
pub fn fixture_csv(seed: u64, n: usize, m: usize) -> String {
    assert!(n <= STATES.len());
    let panel = template_panel(seed, n, m, 0.0);
    let mut rng = rng(seed ^ 0x9e37_79b9);
    let start = NaiveDate::from_ymd_opt(2020, 2, 25).unwrap();
    let mut out = String::from("date,label,name,region,deaths,population\n");
    for i in 0..n {
        let (label, name, region) = STATES[i];
        let population: u64 = rng.random_range(2_000_000..30_000_000);
        let lead: usize = rng.random_range(0..30);
        let tail: usize = if i == n / 2 { 0 } else { rng.random_range(1..20) };
        let mut day = 0u64;
        let mut previous = 0i64;
        for _ in 0..lead {
            out.push_str(&format!("{},{label},{name},{region},0,{population}\n", start + Days::new(day)));
            day += 1;
        }
        for j in 0..(m + tail) {
            let y = panel.values[(i, j.min(m - 1))];
            let rate = (10f64.powf(y) - 0.01).max(0.0);
            let expected = rate * population as f64 / 1e6;
            let jitter: f64 = rng.random_range(0.85..1.15);
            let mut deaths = (expected * jitter).round() as i64;
            if j == 0 {
                deaths = deaths.max(1);
            } else if j % 97 == 40 && i % 4 == 1 && previous >= 3 {
                // a reporting correction small enough for its neighbors to absorb
                deaths = -2;
            }
            previous = deaths;
            out.push_str(&format!(
                "{},{label},{name},{region},{deaths},{population}\n",
                start + Days::new(day)
            ));
            day += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_difference_of_cubic_is_exact() {
        let f = |t: f64| t * t * t - 2.0 * t * t;
        assert!((second_difference(&f, 1.5, 0.1) - (6.0 * 1.5 - 4.0)).abs() < 1e-9);
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        assert!((trapezoid(|t| 2.0 * t + 1.0, 0.0, 3.0, 7) - 12.0).abs() < 1e-12);
        assert!((trapezoid_samples(&[0.0, 1.0, 2.0, 3.0], 1.0) - 4.5).abs() < 1e-12);
    }

    #[test]
    fn gram_schmidt_reproduces_columns() {
        let mut r = rng(3);
        let c = gaussian_matrix(&mut r, 6, 4);
        let (order, q, rr) = gram_schmidt_pivoted(&c);
        let permuted = DMatrix::from_columns(&order.iter().map(|&j| c.column(j)).collect::<Vec<_>>());
        assert!((permuted - q * rr).norm() < 1e-12);
    }

    #[test]
    fn projection_residual_of_member_is_zero() {
        let mut r = rng(4);
        let c = gaussian_matrix(&mut r, 5, 3);
        assert!(projection_residual(&c, &[0, 1], 1) < 1e-12);
        assert!((projection_residual(&c, &[], 2) - c.column(2).norm()).abs() < 1e-15);
    }

    #[test]
    fn fixture_has_requested_units() {
        let csv = fixture_csv(1, 3, 40);
        let labels: std::collections::BTreeSet<&str> =
            csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
        assert_eq!(labels.len(), 3);
    }
}
