//! Pipeline settings. Command-line flags override values from a JSON config
//! file, which override the built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use funcqr::smoothing::half_decade_grid;
use funcqr::Indexing;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Offset of the log mapping, per million per day.
    pub delta: f64,
    pub indexing: Indexing,
    /// Basis size for a fixed-parameter fit.
    pub basis_k: usize,
    /// Roughness penalty for a fixed-parameter fit.
    pub lambda: f64,
    /// Basis sizes scanned by `gcv-scan`.
    pub k_range: Vec<usize>,
    /// Penalties scanned by `gcv-scan`.
    pub lambda_grid: Vec<f64>,
    /// Scale every curve to unit norm before pivoting.
    pub normalize: bool,
    /// Number of curves to keep; `None` uses the R-value gap.
    pub k: Option<usize>,
    /// Uniform evaluation points on `[0, T]`; `None` uses the day grid.
    pub eval_points: Option<usize>,
    pub input: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            delta: 0.01,
            indexing: Indexing::Standard,
            basis_k: 20,
            lambda: 10f64.powf(3.5),
            k_range: (5..=40).collect(),
            lambda_grid: half_decade_grid(0.0, 6.0),
            normalize: false,
            k: None,
            eval_points: None,
            input: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| CliError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn validate(&self) -> CliResult<()> {
        if !(self.delta > 0.0) {
            return Err(CliError::Usage(format!("delta must be positive, got {}", self.delta)));
        }
        if self.basis_k == 0 {
            return Err(CliError::Usage("basis size must be at least 1".into()));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(CliError::Usage(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if self.k == Some(0) {
            return Err(CliError::Usage("k must be at least 1".into()));
        }
        if self.eval_points.is_some_and(|p| p < 2) {
            return Err(CliError::Usage("eval-points must be at least 2".into()));
        }
        Ok(())
    }

    pub fn input(&self) -> CliResult<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| CliError::Usage("no input given (use --input or the config file)".into()))
    }
}

/// Inclusive list of basis sizes given as `a-b` or `a:b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KRange(pub Vec<usize>);

/// Half-decade λ grid given by its log10 bounds `lo:hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid(pub Vec<f64>);

pub fn parse_k_range(text: &str) -> Result<KRange, String> {
    let (lo, hi) = text
        .split_once(['-', ':'])
        .ok_or_else(|| format!("expected LOW-HIGH, got {text:?}"))?;
    let lo: usize = lo.trim().parse().map_err(|_| format!("bad lower bound in {text:?}"))?;
    let hi: usize = hi.trim().parse().map_err(|_| format!("bad upper bound in {text:?}"))?;
    if lo == 0 || lo > hi {
        return Err(format!("empty or invalid range {text:?}"));
    }
    Ok(KRange((lo..=hi).collect()))
}

pub fn parse_lambda_decades(text: &str) -> Result<LambdaGrid, String> {
    let (lo, hi) = text
        .split_once(':')
        .ok_or_else(|| format!("expected LOW:HIGH, got {text:?}"))?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad lower bound in {text:?}"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad upper bound in {text:?}"))?;
    if !(lo <= hi) {
        return Err(format!("empty range {text:?}"));
    }
    Ok(LambdaGrid(half_decade_grid(lo, hi)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_settings() {
        let c = PipelineConfig::default();
        assert_eq!(c.delta, 0.01);
        assert_eq!(c.basis_k, 20);
        assert!((c.lambda.log10() - 3.5).abs() < 1e-15);
        assert_eq!(c.k_range.first(), Some(&5));
        assert_eq!(c.k_range.last(), Some(&40));
        assert_eq!(c.lambda_grid.len(), 13);
        assert_eq!(c.indexing, Indexing::Standard);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c: PipelineConfig = serde_json::from_str(r#"{"delta": 0.1, "indexing": "literal-paper"}"#).unwrap();
        assert_eq!(c.delta, 0.1);
        assert_eq!(c.indexing, Indexing::LiteralPaper);
        assert_eq!(c.basis_k, 20);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"detla": 1}"#).is_err());
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_k_range("5-8").unwrap().0, vec![5, 6, 7, 8]);
        assert_eq!(parse_k_range("3:3").unwrap().0, vec![3]);
        assert!(parse_k_range("8-5").is_err());
        assert!(parse_k_range("0-3").is_err());
        assert_eq!(parse_lambda_decades("0:1").unwrap().0.len(), 3);
        assert!(parse_lambda_decades("2:1").is_err());
    }

    #[test]
    fn validation() {
        let mut c = PipelineConfig::default();
        assert!(c.validate().is_ok());
        c.delta = 0.0;
        assert!(c.validate().is_err());
        let c = PipelineConfig { k: Some(0), ..Default::default() };
        assert!(c.validate().is_err());
    }
}
