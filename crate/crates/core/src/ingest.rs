//! Raw panel parsing and preprocessing.
//!
//! The input is a long-format CSV with one row per (unit, day):
//!
//! ```text
//! date,label,name,region,deaths,population
//! 2020-03-17,SP,São Paulo,Southeast,1,46289333
//! ```
//!
//! Rows are grouped by `label` in order of first appearance. Preprocessing
//! aligns each unit to its first death, truncates all units to the shortest
//! aligned length, converts counts to deaths per million, repairs negative
//! reporting artifacts and maps values into the log domain.

use std::collections::HashMap;
use std::io::Read;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use thiserror::Error;

/// Column names expected in the CSV header, in order.
pub const HEADER: [&str; 6] = ["date", "label", "name", "region", "deaths", "population"];

/// Default cap on the number of left-to-right repair passes.
pub const DEFAULT_MAX_REPAIR_PASSES: usize = 100;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("input is empty")]
    Empty,
    #[error("line {line}: malformed row: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("line {line}: unparseable date {value:?}")]
    BadDate { line: u64, value: String },
    #[error("line {line}: nonpositive population for unit {label}")]
    NonpositivePopulation { line: u64, label: String },
    #[error("line {line}: missing population for unit {label}")]
    MissingPopulation { line: u64, label: String },
    #[error("line {line}: duplicate record for unit {label} on {date}")]
    DuplicateDate {
        line: u64,
        label: String,
        date: NaiveDate,
    },
    #[error("unit {label} has no day with deaths > 0; cannot align")]
    NoDeaths { label: String },
    #[error("series of length {len} is too short to repair (need at least 3)")]
    SeriesTooShort { len: usize },
    #[error("negative value remains at index {index} after {passes} repair passes")]
    RepairNotConverged { index: usize, passes: usize },
    #[error("negative entry {value} at row {row}, column {col}; run the repair step first")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("delta must be positive, got {0}")]
    NonpositiveDelta(f64),
    #[error("panel has no units")]
    NoUnits,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Options controlling how the CSV source is read.
#[derive(Debug, Clone, Copy)]
pub struct PanelFormat {
    pub delimiter: u8,
}

impl Default for PanelFormat {
    fn default() -> Self {
        Self { delimiter: b',' }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyRecord {
    pub date: NaiveDate,
    /// Reported deaths for the day; can be negative after data corrections.
    pub deaths: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub label: String,
    pub name: String,
    pub region: String,
    pub population: u64,
    /// Strictly increasing by date.
    pub series: Vec<DailyRecord>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawPanel {
    pub units: Vec<Unit>,
}

/// Per-million daily mortality aligned at each unit's first death and
/// truncated to a common length `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPanel {
    pub labels: Vec<String>,
    pub names: Vec<String>,
    pub regions: Vec<String>,
    pub populations: Vec<u64>,
    /// Date of the first death for each unit (row start).
    pub first_death: Vec<NaiveDate>,
    /// n×m, deaths per million per day.
    pub values: DMatrix<f64>,
    /// `t_j = j` for `j = 0..m`, in days.
    pub day_grid: Vec<f64>,
}

impl AlignedPanel {
    pub fn n_units(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_days(&self) -> usize {
        self.values.ncols()
    }
}

/// `y_ij = log10(x_ij + delta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogPanel {
    pub labels: Vec<String>,
    /// n×m log-domain values.
    pub values: DMatrix<f64>,
    pub day_grid: Vec<f64>,
    pub delta: f64,
}

impl LogPanel {
    pub fn n_units(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_days(&self) -> usize {
        self.values.ncols()
    }
}

struct UnitBuilder {
    unit: Unit,
    seen: HashMap<NaiveDate, u64>,
}

/// Parse a long-format CSV panel.
pub fn parse_panel<R: Read>(source: R, format: PanelFormat) -> Result<RawPanel, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(source);

    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(IngestError::Empty);
    }
    let got: Vec<&str> = headers.iter().collect();
    if got != HEADER {
        return Err(IngestError::Malformed {
            line: 1,
            reason: format!("expected header {:?}, found {:?}", HEADER.join(","), got.join(",")),
        });
    }

    let mut order: Vec<String> = Vec::new();
    let mut builders: HashMap<String, UnitBuilder> = HashMap::new();

    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != HEADER.len() {
            return Err(IngestError::Malformed {
                line,
                reason: format!("expected {} fields, found {}", HEADER.len(), record.len()),
            });
        }
        let label = record[1].to_string();
        if label.is_empty() {
            return Err(IngestError::Malformed {
                line,
                reason: "empty unit label".into(),
            });
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d").map_err(|_| {
            IngestError::BadDate {
                line,
                value: record[0].to_string(),
            }
        })?;
        let deaths: i64 = record[4].parse().map_err(|_| IngestError::Malformed {
            line,
            reason: format!("deaths {:?} is not an integer", &record[4]),
        })?;
        let population = parse_population(&record[5], line, &label)?;

        let builder = builders.entry(label.clone()).or_insert_with(|| {
            order.push(label.clone());
            UnitBuilder {
                unit: Unit {
                    label: label.clone(),
                    name: record[2].to_string(),
                    region: record[3].to_string(),
                    population,
                    series: Vec::new(),
                },
                seen: HashMap::new(),
            }
        });
        if builder.unit.population != population {
            return Err(IngestError::Malformed {
                line,
                reason: format!(
                    "population for {label} changes from {} to {population}",
                    builder.unit.population
                ),
            });
        }
        if builder.seen.insert(date, line).is_some() {
            return Err(IngestError::DuplicateDate { line, label, date });
        }
        builder.unit.series.push(DailyRecord { date, deaths });
    }

    let units = order
        .into_iter()
        .map(|label| {
            let mut unit = builders.remove(&label).expect("builder exists for label").unit;
            unit.series.sort_by_key(|r| r.date);
            unit
        })
        .collect();
    Ok(RawPanel { units })
}

fn parse_population(field: &str, line: u64, label: &str) -> Result<u64, IngestError> {
    if field.is_empty() {
        return Err(IngestError::MissingPopulation {
            line,
            label: label.to_string(),
        });
    }
    let value: i64 = field.parse().map_err(|_| IngestError::Malformed {
        line,
        reason: format!("population {field:?} is not an integer"),
    })?;
    if value <= 0 {
        return Err(IngestError::NonpositivePopulation {
            line,
            label: label.to_string(),
        });
    }
    Ok(value as u64)
}

/// Deaths per million persons.
pub fn per_million(deaths: f64, population: u64) -> f64 {
    debug_assert!(population > 0);
    deaths * 1e6 / population as f64
}

/// Align every unit at its first day with deaths > 0, truncate to the
/// shortest aligned length and convert to per-million rates.
pub fn align_truncate(panel: &RawPanel) -> Result<AlignedPanel, IngestError> {
    if panel.units.is_empty() {
        return Err(IngestError::NoUnits);
    }
    let mut starts = Vec::with_capacity(panel.units.len());
    for unit in &panel.units {
        let start = unit
            .series
            .iter()
            .position(|r| r.deaths > 0)
            .ok_or_else(|| IngestError::NoDeaths {
                label: unit.label.clone(),
            })?;
        starts.push(start);
    }
    let m = panel
        .units
        .iter()
        .zip(&starts)
        .map(|(u, &s)| u.series.len() - s)
        .min()
        .expect("at least one unit");

    let n = panel.units.len();
    let mut values = DMatrix::zeros(n, m);
    for (i, (unit, &start)) in panel.units.iter().zip(&starts).enumerate() {
        for (j, record) in unit.series[start..start + m].iter().enumerate() {
            values[(i, j)] = per_million(record.deaths as f64, unit.population);
        }
    }

    Ok(AlignedPanel {
        labels: panel.units.iter().map(|u| u.label.clone()).collect(),
        names: panel.units.iter().map(|u| u.name.clone()).collect(),
        regions: panel.units.iter().map(|u| u.region.clone()).collect(),
        populations: panel.units.iter().map(|u| u.population).collect(),
        first_death: panel
            .units
            .iter()
            .zip(&starts)
            .map(|(u, &s)| u.series[s].date)
            .collect(),
        values,
        day_grid: (0..m).map(|j| j as f64).collect(),
    })
}

/// Replace negative values by the mean of their three-point neighborhood.
///
/// Each pass scans left to right; wherever `x[j] < 0` the entries
/// `x[j-1], x[j], x[j+1]` that exist are all set to their mean. Passes repeat
/// until no negative remains. Returns the repaired series and the number of
/// individual repairs applied.
pub fn repair_negatives(
    series: &[f64],
    max_passes: usize,
) -> Result<(Vec<f64>, usize), IngestError> {
    let len = series.len();
    if len < 3 {
        return Err(IngestError::SeriesTooShort { len });
    }
    let mut x = series.to_vec();
    let mut repairs = 0;
    for _ in 0..max_passes {
        if !x.iter().any(|&v| v < 0.0) {
            return Ok((x, repairs));
        }
        let mut changed = false;
        for j in 0..len {
            if x[j] >= 0.0 {
                continue;
            }
            let lo = j.saturating_sub(1);
            let hi = (j + 1).min(len - 1);
            let window = &mut x[lo..=hi];
            let mean = window.iter().sum::<f64>() / window.len() as f64;
            for v in window.iter_mut() {
                if *v != mean {
                    changed = true;
                }
                *v = mean;
            }
            repairs += 1;
        }
        if !changed {
            break;
        }
    }
    match x.iter().position(|&v| v < 0.0) {
        None => Ok((x, repairs)),
        Some(index) => Err(IngestError::RepairNotConverged {
            index,
            passes: max_passes,
        }),
    }
}

/// Apply [`repair_negatives`] to every row. Returns the total repair count.
pub fn repair_panel(panel: &mut AlignedPanel, max_passes: usize) -> Result<usize, IngestError> {
    let mut total = 0;
    for i in 0..panel.n_units() {
        let row: Vec<f64> = panel.values.row(i).iter().copied().collect();
        let (fixed, repairs) = repair_negatives(&row, max_passes)?;
        for (j, v) in fixed.into_iter().enumerate() {
            panel.values[(i, j)] = v;
        }
        total += repairs;
    }
    Ok(total)
}

pub fn log_map(panel: &AlignedPanel, delta: f64) -> Result<LogPanel, IngestError> {
    if !(delta > 0.0) {
        return Err(IngestError::NonpositiveDelta(delta));
    }
    let mut values = panel.values.clone();
    for i in 0..values.nrows() {
        for j in 0..values.ncols() {
            let x = values[(i, j)];
            if x < 0.0 {
                return Err(IngestError::NegativeEntry {
                    row: i,
                    col: j,
                    value: x,
                });
            }
            values[(i, j)] = (x + delta).log10();
        }
    }
    Ok(LogPanel {
        labels: panel.labels.clone(),
        values,
        day_grid: panel.day_grid.clone(),
        delta,
    })
}

/// `x = max(10^y - delta, 0)` entrywise.
pub fn inverse_map(values: &DMatrix<f64>, delta: f64) -> DMatrix<f64> {
    values.map(|y| inverse_value(y, delta))
}

#[inline]
pub fn inverse_value(y: f64, delta: f64) -> f64 {
    (10f64.powf(y) - delta).max(0.0)
}
