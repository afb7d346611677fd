//! On-disk formats passed between subcommands.
//!
//! Matrices are stored as arrays of rows. Every file is self-describing
//! enough for the next stage to run without consulting earlier ones.

use std::fs;
use std::path::Path;

use funcqr::fqr::{verify, Diagnostics};
use funcqr::ingest::{AlignedPanel, LogPanel};
use funcqr::selection::{InfluenceRow, Residual, SweepRow};
use funcqr::{BasisSpec, FunctionalMatrix, PivotedQr, SelectionReport, SmoothFit};
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::numfmt::{fmt_f64, to_json};

pub const PANEL_FILE: &str = "panel.json";
pub const FIT_FILE: &str = "fit.json";
pub const GCV_SCAN_FILE: &str = "gcv_scan.csv";
pub const GCV_BEST_FILE: &str = "gcv_best.json";
pub const DECOMPOSITION_FILE: &str = "decomposition.json";
pub const SELECTION_FILE: &str = "selection.json";
pub const INFLUENCE_FILE: &str = "influence.csv";
pub const SWEEP_FILE: &str = "error_sweep.csv";
pub const NATIONAL_FILE: &str = "national.csv";

pub fn rows(matrix: &DMatrix<f64>) -> Vec<Vec<f64>> {
    matrix.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Rebuild a matrix from rows; `ncols` is needed when there are no rows.
pub fn from_rows(rows: &[Vec<f64>], ncols: usize, what: &str) -> CliResult<DMatrix<f64>> {
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(CliError::Data(format!(
            "{what}: row {bad} has {} entries, expected {ncols}",
            rows[bad].len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let bytes = to_json(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    write_bytes(path, &bytes)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Write a CSV table; floats pass through [`fmt_f64`].
pub fn write_csv(path: &Path, header: &[String], records: &[Vec<String>]) -> CliResult<()> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header).map_err(csv_err)?;
    for record in records {
        writer.write_record(record).map_err(csv_err)?;
    }
    let bytes = writer.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    write_bytes(path, &bytes)
}

/// Read a CSV table as header plus string records.
pub fn read_csv(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<String>>)> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut records = Vec::new();
    for record in reader.records() {
        records.push(record.map_err(csv_err)?.iter().map(str::to_string).collect());
    }
    Ok((header, records))
}

pub fn parse_number(text: &str, path: &Path) -> CliResult<f64> {
    match text {
        "NaN" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => text
            .parse()
            .map_err(|_| CliError::Data(format!("{}: bad number {text:?}", path.display()))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelMetadata {
    pub names: Vec<String>,
    pub regions: Vec<String>,
    pub populations: Vec<u64>,
    /// ISO dates of the first recorded death, one per unit.
    pub first_death: Vec<String>,
    /// Entries changed by the negative-value repair.
    pub repairs: usize,
}

/// Aligned, repaired and log-mapped panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelFile {
    pub labels: Vec<String>,
    pub day_grid: Vec<f64>,
    pub delta: f64,
    /// Per-million daily deaths, one row per unit.
    pub rates: Vec<Vec<f64>>,
    /// `log10(rate + delta)`, one row per unit.
    pub values: Vec<Vec<f64>>,
    pub metadata: PanelMetadata,
}

impl PanelFile {
    pub fn new(aligned: &AlignedPanel, log: &LogPanel, repairs: usize) -> Self {
        Self {
            labels: aligned.labels.clone(),
            day_grid: aligned.day_grid.clone(),
            delta: log.delta,
            rates: rows(&aligned.values),
            values: rows(&log.values),
            metadata: PanelMetadata {
                names: aligned.names.clone(),
                regions: aligned.regions.clone(),
                populations: aligned.populations.clone(),
                first_death: aligned.first_death.iter().map(|d| d.to_string()).collect(),
                repairs,
            },
        }
    }

    pub fn log_panel(&self) -> CliResult<LogPanel> {
        let m = self.day_grid.len();
        let values = from_rows(&self.values, m, "panel values")?;
        if values.nrows() != self.labels.len() {
            return Err(CliError::Data(format!(
                "panel has {} labels but {} rows",
                self.labels.len(),
                values.nrows()
            )));
        }
        Ok(LogPanel {
            labels: self.labels.clone(),
            values,
            day_grid: self.day_grid.clone(),
            delta: self.delta,
        })
    }
}

/// Smoothed curves: coefficients in the cosine basis plus fit statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFile {
    pub basis: BasisSpec,
    pub lambda: f64,
    pub labels: Vec<String>,
    /// K×n, one row per basis function, one column per curve.
    pub coefficients: Vec<Vec<f64>>,
    pub df: f64,
    pub sse: Vec<f64>,
    /// Per-record GCV; absent when the fit has no residual degrees of freedom.
    pub gcv: Option<Vec<f64>>,
    pub total_gcv: Option<f64>,
    pub m: usize,
    pub delta: f64,
    pub day_grid: Vec<f64>,
    pub populations: Vec<u64>,
}

impl FitFile {
    pub fn new(fit: &SmoothFit, panel: &PanelFile) -> Self {
        Self {
            basis: fit.basis,
            lambda: fit.lambda,
            labels: fit.labels.clone(),
            coefficients: rows(&fit.coefficients),
            df: fit.df,
            sse: fit.sse.clone(),
            total_gcv: fit.gcv.as_ref().map(|g| g.iter().sum()),
            gcv: fit.gcv.clone(),
            m: fit.m,
            delta: panel.delta,
            day_grid: panel.day_grid.clone(),
            populations: panel.metadata.populations.clone(),
        }
    }

    pub fn functional_matrix(&self) -> CliResult<FunctionalMatrix> {
        let c = from_rows(&self.coefficients, self.labels.len(), "fit coefficients")?;
        Ok(FunctionalMatrix::new(self.basis, c, self.labels.clone())?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsFile {
    pub factorization_residual: f64,
    pub orthonormality_defect: f64,
    pub diagonal_nonincreasing: bool,
    pub diagonal_nonnegative: bool,
}

impl From<Diagnostics> for DiagnosticsFile {
    fn from(d: Diagnostics) -> Self {
        Self {
            factorization_residual: d.factorization_residual,
            orthonormality_defect: d.orthonormality_defect,
            diagonal_nonincreasing: d.diagonal_nonincreasing,
            diagonal_nonnegative: d.diagonal_nonnegative,
        }
    }
}

/// Pivoted QR of the coefficient matrix, `C D⁻¹ P = B R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionFile {
    pub normalize_flag: bool,
    /// Original column index of each pivot.
    pub permutation: Vec<usize>,
    pub labels_in_order: Vec<String>,
    /// Norm each original column was divided by (all ones unless normalized).
    pub column_scale: Vec<f64>,
    pub r_diag: Vec<f64>,
    pub r_diag_relative: Vec<f64>,
    /// min(K, n)×n upper trapezoid, columns in pivot order.
    pub r: Vec<Vec<f64>>,
    /// K×min(K, n) coefficients of the orthonormal curves.
    pub q_coefficients: Vec<Vec<f64>>,
    pub diagnostics: DiagnosticsFile,
}

impl DecompositionFile {
    pub fn new(qr: &PivotedQr, fm: &FunctionalMatrix) -> Self {
        Self {
            normalize_flag: qr.normalized,
            permutation: qr.permutation.clone(),
            labels_in_order: qr.labels.clone(),
            column_scale: qr.column_scale.clone(),
            r_diag: funcqr::fqr::r_values(qr),
            r_diag_relative: funcqr::fqr::relative_r_values(qr),
            r: rows(&qr.r),
            q_coefficients: rows(&qr.q_coefficients),
            diagnostics: verify(qr, fm).into(),
        }
    }

    /// Rebuild the factorization and check it belongs to `fm`.
    pub fn pivoted_qr(&self, fm: &FunctionalMatrix) -> CliResult<PivotedQr> {
        let n = fm.n_curves();
        let mut sorted = self.permutation.clone();
        sorted.sort_unstable();
        if sorted != (0..n).collect::<Vec<_>>() {
            return Err(CliError::Data(format!(
                "decomposition permutation does not cover the {n} curves of the fit"
            )));
        }
        let order_matches = self
            .permutation
            .iter()
            .zip(&self.labels_in_order)
            .all(|(&i, label)| fm.labels[i] == *label);
        if !order_matches || self.labels_in_order.len() != n || self.column_scale.len() != n {
            return Err(CliError::Data("decomposition labels do not match the fit".into()));
        }
        let steps = self.r.len();
        let r = from_rows(&self.r, n, "decomposition r")?;
        let q = from_rows(&self.q_coefficients, steps, "decomposition q_coefficients")?;
        if q.nrows() != fm.basis.size || steps != fm.basis.size.min(n) {
            return Err(CliError::Data("decomposition shape does not match the fit basis".into()));
        }
        Ok(PivotedQr {
            permutation: self.permutation.clone(),
            q_coefficients: q,
            r,
            labels: self.labels_in_order.clone(),
            column_scale: self.column_scale.clone(),
            normalized: self.normalize_flag,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualFile {
    pub absolute: f64,
    pub relative: f64,
}

impl From<Residual> for ResidualFile {
    fn from(r: Residual) -> Self {
        Self {
            absolute: r.absolute,
            relative: r.relative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceEntry {
    pub unit: String,
    pub selected: bool,
    pub raw: Vec<f64>,
    pub signed_square: Vec<f64>,
}

impl From<&InfluenceRow> for InfluenceEntry {
    fn from(r: &InfluenceRow) -> Self {
        Self {
            unit: r.unit.clone(),
            selected: r.selected,
            raw: r.raw.clone(),
            signed_square: r.signed_square.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KSource {
    /// Largest gap between consecutive R values.
    Gap,
    /// Given on the command line or in the config.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionFile {
    pub k: usize,
    pub k_source: KSource,
    /// Gap-based suggestion, recorded even when `k` was fixed.
    pub suggested_k: Option<usize>,
    pub normalize_flag: bool,
    pub selected_labels: Vec<String>,
    pub remaining_labels: Vec<String>,
    /// k×(n−k), one column per remaining curve.
    pub x: Vec<Vec<f64>>,
    pub r_values: Vec<f64>,
    pub r_values_relative: Vec<f64>,
    pub residual_log: ResidualFile,
    pub residual_mortality: f64,
    pub influence: Vec<InfluenceEntry>,
}

impl SelectionFile {
    pub fn new(report: &SelectionReport, source: KSource, suggested_k: Option<usize>, normalized: bool) -> Self {
        Self {
            k: report.k,
            k_source: source,
            suggested_k,
            normalize_flag: normalized,
            selected_labels: report.selected_labels.clone(),
            remaining_labels: report.remaining_labels.clone(),
            x: rows(&report.x),
            r_values: report.r_values.clone(),
            r_values_relative: report.r_values_relative.clone(),
            residual_log: report.residual_log.into(),
            residual_mortality: report.residual_mortality,
            influence: report.influence.rows.iter().map(InfluenceEntry::from).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcvBestFile {
    pub best_k: usize,
    pub best_lambda: f64,
    pub best_log10_lambda: f64,
    pub best_score: f64,
    pub indexing: funcqr::Indexing,
    pub points: usize,
    pub failed_points: usize,
}

pub fn influence_csv(entries: &[InfluenceEntry], selected: &[String]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["unit".to_string(), "selected".to_string()];
    header.extend(selected.iter().map(|l| format!("raw_{l}")));
    header.extend(selected.iter().map(|l| format!("signed_square_{l}")));
    let records = entries
        .iter()
        .map(|e| {
            let mut rec = vec![e.unit.clone(), e.selected.to_string()];
            rec.extend(e.raw.iter().copied().map(fmt_f64));
            rec.extend(e.signed_square.iter().copied().map(fmt_f64));
            rec
        })
        .collect();
    (header, records)
}

pub fn sweep_csv(rows: &[SweepRow]) -> (Vec<String>, Vec<Vec<String>>) {
    let header = ["k", "rel_error_log", "rel_error_mortality"].map(String::from).to_vec();
    let records = rows
        .iter()
        .map(|r| vec![r.k.to_string(), fmt_f64(r.rel_error_log), fmt_f64(r.rel_error_mortality)])
        .collect();
    (header, records)
}

pub fn read_sweep_csv(path: &Path) -> CliResult<Vec<SweepRow>> {
    let (_, records) = read_csv(path)?;
    records
        .iter()
        .map(|r| {
            if r.len() != 3 {
                return Err(CliError::Data(format!("{}: expected 3 columns", path.display())));
            }
            Ok(SweepRow {
                k: r[0]
                    .parse()
                    .map_err(|_| CliError::Data(format!("{}: bad k {:?}", path.display(), r[0])))?,
                rel_error_log: parse_number(&r[1], path)?,
                rel_error_mortality: parse_number(&r[2], path)?,
            })
        })
        .collect()
}
