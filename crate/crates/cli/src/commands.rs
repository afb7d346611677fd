//! One function per subcommand. Each reads its declared inputs, writes its
//! artifacts into the output directory and returns a short summary.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use funcqr::fqr::qrp;
use funcqr::ingest::{
    align_truncate, inverse_map, log_map, parse_panel, repair_panel, PanelFormat, DEFAULT_MAX_REPAIR_PASSES,
};
use funcqr::selection::{self, error_sweep, national_curve, reconstruct, suggest_k, SweepRow};
use funcqr::smoothing::{evaluate_coefficients, fit_penalized, grid_search, BasisSpec, GridSearch};
use funcqr::{FunctionalMatrix, PivotedQr, SelectionError};
use log::{info, warn};

use crate::artifacts::*;
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::numfmt::fmt_f64;
use crate::svg::{BarChart, Chart, Mark, Series};

fn output_dir(cfg: &PipelineConfig) -> CliResult<&Path> {
    let dir = cfg.output_dir.as_path();
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    Ok(dir)
}

fn write_svg(dir: &Path, name: &str, svg: &str) -> CliResult<()> {
    write_bytes(&dir.join(name), svg.as_bytes())
}

pub fn ingest(cfg: &PipelineConfig) -> CliResult<String> {
    let input = cfg.input()?;
    let context = input.display().to_string();
    let file = File::open(input).map_err(|source| CliError::Io {
        path: input.to_path_buf(),
        source,
    })?;
    let wrap = |source| CliError::Ingest {
        context: context.clone(),
        source,
    };
    let raw = parse_panel(file, PanelFormat::default()).map_err(wrap)?;
    let mut aligned = align_truncate(&raw).map_err(wrap)?;
    let repairs = repair_panel(&mut aligned, DEFAULT_MAX_REPAIR_PASSES).map_err(wrap)?;
    let log = log_map(&aligned, cfg.delta).map_err(wrap)?;
    let panel = PanelFile::new(&aligned, &log, repairs);
    let dir = output_dir(cfg)?;
    write_json(&dir.join(PANEL_FILE), &panel)?;
    Ok(format!(
        "n = {}, m = {}, repairs = {}",
        aligned.n_units(),
        aligned.n_days(),
        repairs
    ))
}

fn domain(day_grid: &[f64]) -> f64 {
    day_grid.last().copied().unwrap_or(0.0)
}

pub fn smooth(cfg: &PipelineConfig) -> CliResult<String> {
    let panel: PanelFile = read_json(cfg.input()?)?;
    let log = panel.log_panel()?;
    let spec = BasisSpec::fourier_cosine(cfg.basis_k, domain(&log.day_grid), cfg.indexing)?;
    let fit = fit_penalized(&log, &spec, cfg.lambda)?;
    let file = FitFile::new(&fit, &panel);
    let dir = output_dir(cfg)?;
    write_json(&dir.join(FIT_FILE), &file)?;
    write_svg(dir, "functional_data.svg", &plot_functional_data(&file)?)?;
    Ok(format!(
        "K = {}, lambda = {}, df = {:.4}, total GCV = {}",
        spec.size,
        cfg.lambda,
        fit.df,
        file.total_gcv.map_or("undefined".into(), |g| format!("{g:.6}"))
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcvRow {
    pub k: usize,
    pub lambda: f64,
    pub total_gcv: f64,
}

pub fn gcv_scan(cfg: &PipelineConfig) -> CliResult<String> {
    let panel: PanelFile = read_json(cfg.input()?)?;
    let log = panel.log_panel()?;
    let search = grid_search(&log, &cfg.k_range, &cfg.lambda_grid, cfg.indexing)?;
    let failed = failed_points(&search);
    for point in &search.table {
        if let Err(e) = &point.total_gcv {
            warn!("K = {}, lambda = {}: {e}", point.k, point.lambda);
        }
    }
    let dir = output_dir(cfg)?;
    let header = ["K", "lambda", "total_gcv", "error"].map(String::from).to_vec();
    let records: Vec<Vec<String>> = search
        .table
        .iter()
        .map(|p| {
            let (score, err) = match &p.total_gcv {
                Ok(s) => (fmt_f64(*s), String::new()),
                Err(e) => (fmt_f64(f64::NAN), e.to_string()),
            };
            vec![p.k.to_string(), fmt_f64(p.lambda), score, err]
        })
        .collect();
    write_csv(&dir.join(GCV_SCAN_FILE), &header, &records)?;
    let best = GcvBestFile {
        best_k: search.best_k,
        best_lambda: search.best_lambda,
        best_log10_lambda: search.best_lambda.log10(),
        best_score: search.best_score,
        indexing: cfg.indexing,
        points: search.table.len(),
        failed_points: failed,
    };
    write_json(&dir.join(GCV_BEST_FILE), &best)?;
    let rows = gcv_rows(&search);
    let (by_lambda, by_k) = plot_gcv(&rows, search.best_k, search.best_lambda);
    write_svg(dir, "gcv_lambda.svg", &by_lambda)?;
    write_svg(dir, "gcv_k.svg", &by_k)?;
    Ok(format!(
        "best K = {}, lambda = {} (log10 {:.2}), total GCV = {:.6}; {} of {} points failed",
        search.best_k,
        search.best_lambda,
        search.best_lambda.log10(),
        search.best_score,
        failed,
        search.table.len()
    ))
}

fn failed_points(search: &GridSearch) -> usize {
    search.table.iter().filter(|p| p.total_gcv.is_err()).count()
}

fn gcv_rows(search: &GridSearch) -> Vec<GcvRow> {
    search
        .table
        .iter()
        .map(|p| GcvRow {
            k: p.k,
            lambda: p.lambda,
            total_gcv: *p.total_gcv.as_ref().unwrap_or(&f64::NAN),
        })
        .collect()
}

fn read_gcv_rows(path: &Path) -> CliResult<Vec<GcvRow>> {
    let (_, records) = read_csv(path)?;
    records
        .iter()
        .map(|r| {
            if r.len() < 3 {
                return Err(CliError::Data(format!("{}: expected K,lambda,total_gcv", path.display())));
            }
            Ok(GcvRow {
                k: r[0]
                    .parse()
                    .map_err(|_| CliError::Data(format!("{}: bad K {:?}", path.display(), r[0])))?,
                lambda: parse_number(&r[1], path)?,
                total_gcv: parse_number(&r[2], path)?,
            })
        })
        .collect()
}

fn load_fit(cfg: &PipelineConfig) -> CliResult<(FitFile, FunctionalMatrix)> {
    let fit: FitFile = read_json(cfg.input()?)?;
    let fm = fit.functional_matrix()?;
    Ok((fit, fm))
}

fn decomposition_for(
    fm: &FunctionalMatrix,
    cfg: &PipelineConfig,
    path: Option<&Path>,
) -> CliResult<(PivotedQr, DecompositionFile)> {
    match path {
        Some(p) => {
            let file: DecompositionFile = read_json(p)?;
            let qr = file.pivoted_qr(fm)?;
            Ok((qr, file))
        }
        None => {
            let qr = qrp(fm, cfg.normalize)?;
            let file = DecompositionFile::new(&qr, fm);
            Ok((qr, file))
        }
    }
}

pub fn decompose(cfg: &PipelineConfig) -> CliResult<String> {
    let (_, fm) = load_fit(cfg)?;
    let (_, file) = decomposition_for(&fm, cfg, None)?;
    let dir = output_dir(cfg)?;
    write_json(&dir.join(DECOMPOSITION_FILE), &file)?;
    write_svg(dir, "r_values.svg", &plot_r_values(&file))?;
    let head: Vec<String> = file.labels_in_order.iter().take(5).cloned().collect();
    Ok(format!(
        "pivots {} ...; r11 = {:.6}; factorization residual {:.3e}",
        head.join(", "),
        file.r_diag.first().copied().unwrap_or(0.0),
        file.diagnostics.factorization_residual
    ))
}

/// Evaluation grid: the fit's day grid, or uniform points on `[0, T]`.
pub fn eval_grid(fit: &FitFile, cfg: &PipelineConfig) -> Vec<f64> {
    match cfg.eval_points {
        Some(p) => {
            let t = fit.basis.domain;
            (0..p).map(|i| t * i as f64 / (p - 1) as f64).collect()
        }
        None => fit.day_grid.clone(),
    }
}

struct Selected {
    file: SelectionFile,
    decomposition: DecompositionFile,
    qr: PivotedQr,
}

fn run_selection(
    fit: &FitFile,
    fm: &FunctionalMatrix,
    cfg: &PipelineConfig,
    decomposition: Option<&Path>,
    grid: &[f64],
) -> CliResult<Selected> {
    let (qr, dfile) = decomposition_for(fm, cfg, decomposition)?;
    let suggested = match suggest_k(&dfile.r_diag) {
        Ok(k) => Some(k),
        Err(e) if cfg.k.is_some() => {
            warn!("no R-value gap: {e}");
            None
        }
        Err(e) => return Err(e.into()),
    };
    let (k, source) = match cfg.k {
        Some(k) => (k, KSource::Fixed),
        None => (suggested.unwrap_or(1), KSource::Gap),
    };
    let n = fm.n_curves();
    if k > n {
        return Err(SelectionError::InvalidK { k, n }.into());
    }
    let report = selection::select(fm, &qr, k, fit.delta, grid)?;
    info!("k = {k}, selected {:?}", report.selected_labels);
    Ok(Selected {
        file: SelectionFile::new(&report, source, suggested, qr.normalized),
        decomposition: dfile,
        qr,
    })
}

fn write_selection(dir: &Path, sel: &SelectionFile) -> CliResult<()> {
    write_json(&dir.join(SELECTION_FILE), sel)?;
    let (header, records) = influence_csv(&sel.influence, &sel.selected_labels);
    write_csv(&dir.join(INFLUENCE_FILE), &header, &records)?;
    for (name, svg) in plot_influence(sel) {
        write_svg(dir, &name, &svg)?;
    }
    Ok(())
}

fn selection_summary(sel: &SelectionFile) -> String {
    format!(
        "k = {} ({}), selected {}; relative residual log {:.4}, mortality {:.4}",
        sel.k,
        match sel.k_source {
            KSource::Gap => "R-value gap",
            KSource::Fixed => "fixed",
        },
        sel.selected_labels.join(", "),
        sel.residual_log.relative,
        sel.residual_mortality
    )
}

pub fn select(cfg: &PipelineConfig, decomposition: Option<&Path>) -> CliResult<String> {
    let (fit, fm) = load_fit(cfg)?;
    let grid = eval_grid(&fit, cfg);
    let sel = run_selection(&fit, &fm, cfg, decomposition, &grid)?;
    let dir = output_dir(cfg)?;
    write_selection(dir, &sel.file)?;
    write_svg(dir, "selected_curves.svg", &plot_selected_curves(&fit, &sel.file, &grid)?)?;
    Ok(selection_summary(&sel.file))
}

/// National rate from the full smoothed panel and from reconstructions that
/// keep `k` and `k + 1` curves.
#[derive(Debug, Clone, PartialEq)]
pub struct NationalTable {
    pub t: Vec<f64>,
    pub columns: Vec<(String, Vec<f64>)>,
}

fn national_table(fit: &FitFile, fm: &FunctionalMatrix, qr: &PivotedQr, k: usize, grid: &[f64]) -> CliResult<NationalTable> {
    let curves = |m: &FunctionalMatrix| -> CliResult<Vec<f64>> {
        let log = evaluate_coefficients(&m.basis, &m.coefficients, grid)?;
        Ok(national_curve(&inverse_map(&log, fit.delta), &fit.populations)?)
    };
    let mut columns = vec![("functional_data".to_string(), curves(fm)?)];
    for kk in [k, k + 1] {
        if kk > fm.n_curves() {
            continue;
        }
        match reconstruct(fm, qr, kk) {
            Ok(approx) => columns.push((format!("k_{kk}"), curves(&approx)?)),
            Err(SelectionError::SingularR11 { .. }) if kk != k => {
                warn!("national overlay: no fit at k = {kk}");
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(NationalTable {
        t: grid.to_vec(),
        columns,
    })
}

fn national_csv(table: &NationalTable) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["t".to_string()];
    header.extend(table.columns.iter().map(|(name, _)| name.clone()));
    let records = table
        .t
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let mut rec = vec![fmt_f64(t)];
            rec.extend(table.columns.iter().map(|(_, v)| fmt_f64(v[j])));
            rec
        })
        .collect();
    (header, records)
}

fn read_national_csv(path: &Path) -> CliResult<NationalTable> {
    let (header, records) = read_csv(path)?;
    if header.first().map(String::as_str) != Some("t") {
        return Err(CliError::Data(format!("{}: first column must be t", path.display())));
    }
    let mut t = Vec::with_capacity(records.len());
    let mut columns: Vec<(String, Vec<f64>)> = header[1..].iter().map(|h| (h.clone(), Vec::new())).collect();
    for rec in &records {
        if rec.len() != header.len() {
            return Err(CliError::Data(format!("{}: ragged row", path.display())));
        }
        t.push(parse_number(&rec[0], path)?);
        for (c, cell) in columns.iter_mut().zip(&rec[1..]) {
            c.1.push(parse_number(cell, path)?);
        }
    }
    Ok(NationalTable { t, columns })
}

pub fn report(cfg: &PipelineConfig, decomposition: Option<&Path>) -> CliResult<String> {
    let (fit, fm) = load_fit(cfg)?;
    let grid = eval_grid(&fit, cfg);
    let sel = run_selection(&fit, &fm, cfg, decomposition, &grid)?;
    let sweep = error_sweep(&fm, &sel.qr, fit.delta, &grid)?;
    let national = national_table(&fit, &fm, &sel.qr, sel.file.k, &grid)?;

    let dir = output_dir(cfg)?;
    write_json(&dir.join(DECOMPOSITION_FILE), &sel.decomposition)?;
    write_selection(dir, &sel.file)?;
    let (header, records) = sweep_csv(&sweep);
    write_csv(&dir.join(SWEEP_FILE), &header, &records)?;
    let (header, records) = national_csv(&national);
    write_csv(&dir.join(NATIONAL_FILE), &header, &records)?;

    write_svg(dir, "functional_data.svg", &plot_functional_data(&fit)?)?;
    write_svg(dir, "r_values.svg", &plot_r_values(&sel.decomposition))?;
    write_svg(dir, "error_vs_k.svg", &plot_error_sweep(&sweep))?;
    write_svg(dir, "selected_curves.svg", &plot_selected_curves(&fit, &sel.file, &grid)?)?;
    write_svg(dir, "national.svg", &plot_national(&national))?;
    Ok(selection_summary(&sel.file))
}

/// Redraw every chart whose source artifact is present in the input
/// directory (default: the output directory).
pub fn plot(cfg: &PipelineConfig) -> CliResult<String> {
    let src: PathBuf = cfg.input.clone().unwrap_or_else(|| cfg.output_dir.clone());
    if !src.is_dir() {
        return Err(CliError::Usage(format!(
            "plot expects a directory of artifacts, {} is not one",
            src.display()
        )));
    }
    let dir = output_dir(cfg)?;
    let mut drawn = Vec::new();
    let mut put = |name: String, svg: String| -> CliResult<()> {
        write_svg(dir, &name, &svg)?;
        drawn.push(name);
        Ok(())
    };

    let fit: Option<FitFile> = src.join(FIT_FILE).is_file().then(|| read_json(&src.join(FIT_FILE))).transpose()?;
    if let Some(fit) = &fit {
        put("functional_data.svg".into(), plot_functional_data(fit)?)?;
    }
    if src.join(DECOMPOSITION_FILE).is_file() {
        let d: DecompositionFile = read_json(&src.join(DECOMPOSITION_FILE))?;
        put("r_values.svg".into(), plot_r_values(&d))?;
    }
    if src.join(SELECTION_FILE).is_file() {
        let sel: SelectionFile = read_json(&src.join(SELECTION_FILE))?;
        for (name, svg) in plot_influence(&sel) {
            put(name, svg)?;
        }
        if let Some(fit) = &fit {
            let grid = eval_grid(fit, cfg);
            put("selected_curves.svg".into(), plot_selected_curves(fit, &sel, &grid)?)?;
        }
    }
    if src.join(SWEEP_FILE).is_file() {
        put("error_vs_k.svg".into(), plot_error_sweep(&read_sweep_csv(&src.join(SWEEP_FILE))?))?;
    }
    if src.join(NATIONAL_FILE).is_file() {
        put("national.svg".into(), plot_national(&read_national_csv(&src.join(NATIONAL_FILE))?))?;
    }
    if src.join(GCV_SCAN_FILE).is_file() {
        let rows = read_gcv_rows(&src.join(GCV_SCAN_FILE))?;
        let best = rows
            .iter()
            .filter(|r| r.total_gcv.is_finite())
            .fold(None::<&GcvRow>, |b, r| match b {
                Some(b) if b.total_gcv <= r.total_gcv => Some(b),
                _ => Some(r),
            });
        if let Some(best) = best {
            let (by_lambda, by_k) = plot_gcv(&rows, best.k, best.lambda);
            put("gcv_lambda.svg".into(), by_lambda)?;
            put("gcv_k.svg".into(), by_k)?;
        }
    }
    if drawn.is_empty() {
        return Err(CliError::Data(format!("no artifacts found in {}", src.display())));
    }
    Ok(format!("wrote {}", drawn.join(", ")))
}

fn plot_functional_data(fit: &FitFile) -> CliResult<String> {
    let fm = fit.functional_matrix()?;
    let curves = evaluate_coefficients(&fm.basis, &fm.coefficients, &fit.day_grid)?;
    let mut chart = Chart::new("Smoothed curves")
        .x_label("days since first death")
        .y_label("log10(deaths per million + delta)");
    for (i, label) in fit.labels.iter().enumerate() {
        let pts = fit.day_grid.iter().zip(curves.row(i).iter()).map(|(&t, &y)| (t, y)).collect();
        chart = chart.series(Series::new(label.clone(), pts, Mark::Line));
    }
    Ok(chart.to_svg())
}

fn plot_r_values(d: &DecompositionFile) -> String {
    let pts = d.r_diag.iter().enumerate().map(|(i, &r)| ((i + 1) as f64, r)).collect();
    Chart::new("R values")
        .x_label("pivot step")
        .y_label("r_kk")
        .series(Series::new("r_kk", pts, Mark::Points))
        .to_svg()
}

fn plot_error_sweep(rows: &[SweepRow]) -> String {
    let pick = |f: fn(&SweepRow) -> f64| rows.iter().map(|r| (r.k as f64, f(r))).collect::<Vec<_>>();
    Chart::new("Relative error of fitting")
        .x_label("k")
        .y_label("relative error")
        .series(Series::new("log domain", pick(|r| r.rel_error_log), Mark::LinePoints))
        .series(Series::new("mortality domain", pick(|r| r.rel_error_mortality), Mark::LinePoints))
        .to_svg()
}

fn plot_selected_curves(fit: &FitFile, sel: &SelectionFile, grid: &[f64]) -> CliResult<String> {
    let fm = fit.functional_matrix()?;
    let mut chart = Chart::new(format!("Selected curves (k = {})", sel.k))
        .x_label("days since first death")
        .y_label("deaths per million");
    let log = evaluate_coefficients(&fm.basis, &fm.coefficients, grid)?;
    let rates = inverse_map(&log, fit.delta);
    for label in &sel.selected_labels {
        let i = fit
            .labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| CliError::Data(format!("selected unit {label} is not in the fit")))?;
        let pts = grid.iter().zip(rates.row(i).iter()).map(|(&t, &y)| (t, y)).collect();
        chart = chart.series(Series::new(label.clone(), pts, Mark::Line));
    }
    Ok(chart.to_svg())
}

fn plot_national(table: &NationalTable) -> String {
    let mut chart = Chart::new("National rate")
        .x_label("days since first death")
        .y_label("deaths per million");
    for (i, (name, values)) in table.columns.iter().enumerate() {
        let pts = table.t.iter().copied().zip(values.iter().copied()).collect();
        let mark = if i == 0 { Mark::Line } else { Mark::Dashed };
        chart = chart.series(Series::new(name.clone(), pts, mark));
    }
    chart.to_svg()
}

/// One bar chart per selected unit, of signed squared coefficients.
fn plot_influence(sel: &SelectionFile) -> Vec<(String, String)> {
    sel.selected_labels
        .iter()
        .enumerate()
        .map(|(s, label)| {
            let chart = sel.influence.iter().fold(
                BarChart::new(format!("Influence of {label}"), "signed squared coefficient"),
                |c, e| c.bar(e.unit.clone(), e.signed_square[s], e.selected),
            );
            (format!("influence_{label}.svg"), chart.to_svg())
        })
        .collect()
}

fn plot_gcv(rows: &[GcvRow], best_k: usize, best_lambda: f64) -> (String, String) {
    let by_lambda: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.k == best_k)
        .map(|r| (r.lambda, r.total_gcv))
        .collect();
    let by_k: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.lambda == best_lambda)
        .map(|r| (r.k as f64, r.total_gcv))
        .collect();
    let lambda_svg = Chart::new(format!("GCV vs lambda (K = {best_k})"))
        .x_label("lambda")
        .y_label("total GCV")
        .log_x()
        .series(Series::new(format!("K = {best_k}"), by_lambda, Mark::LinePoints))
        .to_svg();
    let k_svg = Chart::new(format!("GCV vs K (lambda = {best_lambda:.4e})"))
        .x_label("K")
        .y_label("total GCV")
        .series(Series::new("total GCV", by_k, Mark::LinePoints))
        .to_svg();
    (lambda_svg, k_svg)
}
