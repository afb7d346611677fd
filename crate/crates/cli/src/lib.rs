//! Command-line front end for the `funcqr` pipeline.
//!
//! Stages exchange data only through files in the output directory:
//!
//! ```text
//! ingest     CSV            -> panel.json
//! smooth     panel.json     -> fit.json
//! gcv-scan   panel.json     -> gcv_scan.csv, gcv_best.json
//! decompose  fit.json       -> decomposition.json
//! select     fit.json       -> selection.json, influence.csv
//! report     fit.json       -> all of the above plus error_sweep.csv, national.csv
//! plot       artifact dir   -> SVG charts
//! ```

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod numfmt;
pub mod svg;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use funcqr::Indexing;

pub use config::PipelineConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "funcqr", version, about = "Select representative curves by functional QR with column pivoting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a daily death-count CSV into an aligned, log-mapped panel.
    Ingest(CommonArgs),
    /// Fit every curve at fixed K and lambda.
    Smooth(CommonArgs),
    /// Scan K and lambda by total GCV.
    GcvScan(CommonArgs),
    /// Pivoted QR of a fit.
    Decompose(CommonArgs),
    /// Choose k curves and express the rest through them.
    Select(SelectArgs),
    /// Selection plus error sweep, national overlay and every chart.
    Report(SelectArgs),
    /// Redraw charts from an artifact directory.
    Plot(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Input file (or directory for `plot`).
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    #[arg(long, short)]
    pub output_dir: Option<PathBuf>,
    /// JSON file with pipeline settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Offset of the log mapping.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Basis size for `smooth`.
    #[arg(long)]
    pub basis_k: Option<usize>,
    /// Penalty for `smooth`; accepts `10^3.5`.
    #[arg(long, value_parser = parse_lambda)]
    pub lambda: Option<f64>,
    #[arg(long, value_parser = parse_indexing)]
    pub indexing: Option<Indexing>,
    /// Scale curves to unit norm before pivoting.
    #[arg(long)]
    pub normalize: bool,
    /// Number of curves to keep; default picks the largest R-value gap.
    #[arg(long)]
    pub k: Option<usize>,
    /// Basis sizes for `gcv-scan`, e.g. `5-40`.
    #[arg(long, value_parser = config::parse_k_range)]
    pub k_range: Option<config::KRange>,
    /// log10 bounds of the half-decade lambda grid, e.g. `0:6`.
    #[arg(long, allow_hyphen_values = true, value_parser = config::parse_lambda_decades)]
    pub lambda_decades: Option<config::LambdaGrid>,
    /// Evaluate curves at this many uniform points instead of the day grid.
    #[arg(long)]
    pub eval_points: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Reuse an existing decomposition instead of recomputing it.
    #[arg(long)]
    pub decomposition: Option<PathBuf>,
}

fn parse_indexing(text: &str) -> Result<Indexing, String> {
    text.parse::<Indexing>().map_err(|e| e.to_string())
}

fn parse_lambda(text: &str) -> Result<f64, String> {
    let value = match text.strip_prefix("10^") {
        Some(exp) => exp
            .parse::<f64>()
            .map(|e| 10f64.powf(e))
            .map_err(|_| format!("bad exponent in {text:?}"))?,
        None => text.parse::<f64>().map_err(|_| format!("bad number {text:?}"))?,
    };
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(format!("lambda must be finite and nonnegative, got {text:?}"))
    }
}

impl CommonArgs {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> CliResult<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        macro_rules! take {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                }
            )*};
        }
        take!(delta, basis_k, lambda, indexing);
        if let Some(v) = &self.k_range {
            cfg.k_range = v.0.clone();
        }
        if let Some(v) = &self.lambda_decades {
            cfg.lambda_grid = v.0.clone();
        }
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
        if self.input.is_some() {
            cfg.input = self.input.clone();
        }
        if self.k.is_some() {
            cfg.k = self.k;
        }
        if self.eval_points.is_some() {
            cfg.eval_points = self.eval_points;
        }
        if self.normalize {
            cfg.normalize = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cli: &Cli) -> CliResult<String> {
    match &cli.command {
        Command::Ingest(a) => commands::ingest(&a.resolve()?),
        Command::Smooth(a) => commands::smooth(&a.resolve()?),
        Command::GcvScan(a) => commands::gcv_scan(&a.resolve()?),
        Command::Decompose(a) => commands::decompose(&a.resolve()?),
        Command::Select(a) => commands::select(&a.common.resolve()?, a.decomposition.as_deref()),
        Command::Report(a) => commands::report(&a.common.resolve()?, a.decomposition.as_deref()),
        Command::Plot(a) => commands::plot(&a.resolve()?),
    }
}
