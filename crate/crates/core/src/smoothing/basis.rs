//! Truncated Fourier cosine basis on `[0, T]`.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::SmoothingError;

/// Relative slack allowed when checking that a time lies in `[0, T]`.
const DOMAIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    #[default]
    FourierCosine,
}

/// Frequency indexing of the cosine terms.
///
/// `Standard` uses `ω_k = (k-1)π/T` so the second function is the
/// fundamental half-wave. `LiteralPaper` uses `ω_k = kπ/T` for `k ≥ 2`,
/// which skips the fundamental.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Indexing {
    #[default]
    Standard,
    LiteralPaper,
}

impl fmt::Display for Indexing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Indexing::Standard => "standard",
            Indexing::LiteralPaper => "literal-paper",
        })
    }
}

impl std::str::FromStr for Indexing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(Indexing::Standard),
            "literal-paper" => Ok(Indexing::LiteralPaper),
            other => Err(format!(
                "unknown indexing {other:?} (expected standard or literal-paper)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    /// Number of basis functions.
    #[serde(rename = "K")]
    pub size: usize,
    /// Domain length in days.
    #[serde(rename = "T")]
    pub domain: f64,
    pub indexing: Indexing,
}

impl BasisSpec {
    pub fn fourier_cosine(size: usize, domain: f64, indexing: Indexing) -> Result<Self, SmoothingError> {
        let spec = Self {
            kind: BasisKind::FourierCosine,
            size,
            domain,
            indexing,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SmoothingError> {
        if self.size == 0 {
            return Err(SmoothingError::InvalidBasis("basis size must be at least 1".into()));
        }
        if !(self.domain > 0.0) || !self.domain.is_finite() {
            return Err(SmoothingError::InvalidBasis(format!(
                "domain length must be positive, got {}",
                self.domain
            )));
        }
        Ok(())
    }

    /// Angular frequency of basis function `k` (zero-based).
    pub fn frequency(&self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        let multiple = match self.indexing {
            Indexing::Standard => k,
            Indexing::LiteralPaper => k + 1,
        };
        multiple as f64 * PI / self.domain
    }

    /// Value of basis function `k` (zero-based) at `t`.
    pub fn value(&self, k: usize, t: f64) -> f64 {
        if k == 0 {
            1.0 / self.domain.sqrt()
        } else {
            (2.0 / self.domain).sqrt() * (self.frequency(k) * t).cos()
        }
    }

    pub(crate) fn check_time(&self, t: f64) -> Result<(), SmoothingError> {
        let slack = DOMAIN_SLACK * self.domain;
        if t.is_finite() && t >= -slack && t <= self.domain + slack {
            Ok(())
        } else {
            Err(SmoothingError::OutOfDomain {
                t,
                domain: self.domain,
            })
        }
    }
}

/// Evaluation matrix `Φ` with `Φ[j, k] = g_k(t_j)`, shape `grid.len() × K`.
pub fn basis_eval(spec: &BasisSpec, grid: &[f64]) -> Result<DMatrix<f64>, SmoothingError> {
    spec.validate()?;
    for &t in grid {
        spec.check_time(t)?;
    }
    Ok(DMatrix::from_fn(grid.len(), spec.size, |j, k| spec.value(k, grid[j])))
}

/// Roughness penalty `P[j, k] = ∫ D²g_j D²g_k dt`.
///
/// The cosine functions stay orthonormal under two derivatives up to the
/// factor `ω²`, so `P` is diagonal with entries `ω_k⁴`.
pub fn penalty_matrix(spec: &BasisSpec) -> DMatrix<f64> {
    DMatrix::from_fn(spec.size, spec.size, |j, k| {
        if j == k {
            spec.frequency(k).powi(4)
        } else {
            0.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_column_is_one_over_root_t() {
        let spec = BasisSpec::fourier_cosine(5, 324.0, Indexing::Standard).unwrap();
        let phi = basis_eval(&spec, &[0.0, 17.5, 324.0]).unwrap();
        for j in 0..3 {
            assert!((phi[(j, 0)] - 1.0 / 18.0).abs() < 1e-15);
        }
        assert!((phi[(0, 0)] - 0.055556).abs() < 1e-6);
    }

    #[test]
    fn second_function_at_zero() {
        for indexing in [Indexing::Standard, Indexing::LiteralPaper] {
            let spec = BasisSpec::fourier_cosine(3, 324.0, indexing).unwrap();
            let phi = basis_eval(&spec, &[0.0]).unwrap();
            assert!((phi[(0, 1)] - (2.0f64 / 324.0).sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn frequencies_follow_indexing() {
        let t = 324.0;
        let standard = BasisSpec::fourier_cosine(4, t, Indexing::Standard).unwrap();
        let literal = BasisSpec::fourier_cosine(4, t, Indexing::LiteralPaper).unwrap();
        assert_eq!(standard.frequency(0), 0.0);
        assert_eq!(literal.frequency(0), 0.0);
        assert!((standard.frequency(1) - PI / t).abs() < 1e-18);
        assert!((literal.frequency(1) - 2.0 * PI / t).abs() < 1e-18);
        assert!((standard.frequency(3) - 3.0 * PI / t).abs() < 1e-18);
    }

    #[test]
    fn rejects_out_of_domain_time() {
        let spec = BasisSpec::fourier_cosine(3, 10.0, Indexing::Standard).unwrap();
        assert!(matches!(
            basis_eval(&spec, &[0.0, 10.5]),
            Err(SmoothingError::OutOfDomain { .. })
        ));
        assert!(basis_eval(&spec, &[-1e-3]).is_err());
        assert!(basis_eval(&spec, &[f64::NAN]).is_err());
    }

    #[test]
    fn rejects_invalid_spec() {
        assert!(BasisSpec::fourier_cosine(0, 10.0, Indexing::Standard).is_err());
        assert!(BasisSpec::fourier_cosine(3, 0.0, Indexing::Standard).is_err());
    }

    #[test]
    fn penalty_is_diagonal_fourth_power() {
        let spec = BasisSpec::fourier_cosine(3, 324.0, Indexing::Standard).unwrap();
        let p = penalty_matrix(&spec);
        assert_eq!(p[(0, 0)], 0.0);
        let expected = (PI / 324.0).powi(4);
        assert!((p[(1, 1)] - expected).abs() < 1e-24);
        assert!((p[(1, 1)] - 8.84e-9).abs() < 1e-11);
        assert_eq!(p[(0, 1)], 0.0);
        assert_eq!(p[(2, 1)], 0.0);
    }

    #[test]
    fn serializes_with_short_field_names() {
        let spec = BasisSpec::fourier_cosine(20, 324.0, Indexing::LiteralPaper).unwrap();
        let text = format!("{:?}", spec.indexing);
        assert_eq!(text, "LiteralPaper");
        assert_eq!("literal-paper".parse::<Indexing>().unwrap(), Indexing::LiteralPaper);
        assert!("other".parse::<Indexing>().is_err());
    }
}
