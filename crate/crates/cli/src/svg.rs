//! Minimal SVG line, scatter and bar charts.
//!
//! Output depends only on the data, so identical inputs give identical files.
//! The only build-dependent bytes are in the leading version comment.

use std::fmt::Write;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 540.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;

const COLORS: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Line,
    Dashed,
    Points,
    LinePoints,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub mark: Mark,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>, mark: Mark) -> Self {
        Self {
            name: name.into(),
            points,
            mark,
        }
    }

    /// Series with `x = 0, 1, 2, ...`.
    pub fn indexed(name: impl Into<String>, ys: &[f64], mark: Mark) -> Self {
        Self::new(name, ys.iter().enumerate().map(|(i, &y)| (i as f64, y)).collect(), mark)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Chart {
    title: String,
    x_label: String,
    y_label: String,
    log_x: bool,
    log_y: bool,
    series: Vec<Series>,
}

impl Chart {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            ..Default::default()
        }
    }

    pub fn x_label(mut self, label: impl Into<String>) -> Self {
        self.x_label = label.into();
        self
    }

    pub fn y_label(mut self, label: impl Into<String>) -> Self {
        self.y_label = label.into();
        self
    }

    pub fn log_x(mut self) -> Self {
        self.log_x = true;
        self
    }

    pub fn log_y(mut self) -> Self {
        self.log_y = true;
        self
    }

    pub fn series(mut self, series: Series) -> Self {
        self.series.push(series);
        self
    }

    fn transformed(&self, series: &Series) -> Vec<(f64, f64)> {
        let tx = |v: f64| if self.log_x { v.log10() } else { v };
        let ty = |v: f64| if self.log_y { v.log10() } else { v };
        series
            .points
            .iter()
            .map(|&(x, y)| (tx(x), ty(y)))
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .collect()
    }

    pub fn to_svg(&self) -> String {
        let data: Vec<Vec<(f64, f64)>> = self.series.iter().map(|s| self.transformed(s)).collect();
        let all = data.iter().flatten();
        let (x_lo, x_hi) = padded_range(all.clone().map(|p| p.0), 0.0);
        let (y_lo, y_hi) = padded_range(all.map(|p| p.1), 0.05);
        let x_ticks = nice_ticks(x_lo, x_hi, 6);
        let y_ticks = nice_ticks(y_lo, y_hi, 6);
        let (x_lo, x_hi) = (x_lo.min(x_ticks[0]), x_hi.max(*x_ticks.last().unwrap()));
        let (y_lo, y_hi) = (y_lo.min(y_ticks[0]), y_hi.max(*y_ticks.last().unwrap()));

        let plot_w = WIDTH - LEFT - RIGHT;
        let plot_h = HEIGHT - TOP - BOTTOM;
        let px = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
        let py = |y: f64| TOP + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h;

        let mut svg = header(&self.title);
        frame(&mut svg, &self.x_label, &self.y_label);
        let step = |t: &[f64]| if t.len() > 1 { t[1] - t[0] } else { 1.0 };
        let (xs, ys) = (step(&x_ticks), step(&y_ticks));
        for &t in &x_ticks {
            let x = px(t);
            let _ = write!(
                svg,
                r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#dddddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="12">{}</text>"##,
                TOP,
                TOP + plot_h,
                TOP + plot_h + 18.0,
                tick_label(t, xs, self.log_x)
            );
        }
        for &t in &y_ticks {
            let y = py(t);
            let _ = write!(
                svg,
                r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end" font-size="12">{}</text>"##,
                LEFT + plot_w,
                LEFT - 6.0,
                y + 4.0,
                tick_label(t, ys, self.log_y)
            );
        }
        axes(&mut svg);

        for (i, (series, points)) in self.series.iter().zip(&data).enumerate() {
            let color = COLORS[i % COLORS.len()];
            if matches!(series.mark, Mark::Line | Mark::Dashed | Mark::LinePoints) && points.len() > 1 {
                let mut d = String::new();
                for (j, &(x, y)) in points.iter().enumerate() {
                    let _ = write!(d, "{}{:.2} {:.2}", if j == 0 { "M" } else { " L" }, px(x), py(y));
                }
                let dash = if series.mark == Mark::Dashed {
                    r#" stroke-dasharray="6 4""#
                } else {
                    ""
                };
                let _ = write!(
                    svg,
                    r#"<path d="{d}" stroke="{color}" stroke-width="1.8" fill="none"{dash}/>"#
                );
            }
            if matches!(series.mark, Mark::Points | Mark::LinePoints) || points.len() == 1 {
                for &(x, y) in points {
                    let _ = write!(
                        svg,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"/>"#,
                        px(x),
                        py(y)
                    );
                }
            }
            legend_entry(&mut svg, i, &series.name, color);
        }
        svg.push_str("</svg>\n");
        svg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bar {
    pub label: String,
    pub value: f64,
    pub highlight: bool,
}

#[derive(Debug, Clone, Default)]
pub struct BarChart {
    title: String,
    y_label: String,
    bars: Vec<Bar>,
}

impl BarChart {
    pub fn new(title: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            y_label: y_label.into(),
            bars: Vec::new(),
        }
    }

    pub fn bar(mut self, label: impl Into<String>, value: f64, highlight: bool) -> Self {
        self.bars.push(Bar {
            label: label.into(),
            value,
            highlight,
        });
        self
    }

    pub fn to_svg(&self) -> String {
        let values = self.bars.iter().map(|b| b.value).filter(|v| v.is_finite());
        let (lo, hi) = padded_range(values.chain([0.0]), 0.05);
        let ticks = nice_ticks(lo, hi, 6);
        let (lo, hi) = (lo.min(ticks[0]), hi.max(*ticks.last().unwrap()));
        let plot_w = WIDTH - LEFT - RIGHT;
        let plot_h = HEIGHT - TOP - BOTTOM;
        let py = |y: f64| TOP + plot_h - (y - lo) / (hi - lo) * plot_h;
        let slot = plot_w / self.bars.len().max(1) as f64;

        let mut svg = header(&self.title);
        frame(&mut svg, "", &self.y_label);
        let step = if ticks.len() > 1 { ticks[1] - ticks[0] } else { 1.0 };
        for &t in &ticks {
            let y = py(t);
            let _ = write!(
                svg,
                r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end" font-size="12">{}</text>"##,
                LEFT + plot_w,
                LEFT - 6.0,
                y + 4.0,
                tick_label(t, step, false)
            );
        }
        axes(&mut svg);
        let zero = py(0.0);
        for (i, bar) in self.bars.iter().enumerate() {
            let x = LEFT + slot * i as f64 + slot * 0.15;
            let v = if bar.value.is_finite() { bar.value } else { 0.0 };
            let top = py(v).min(zero);
            let h = (py(v) - zero).abs();
            let color = if bar.highlight { COLORS[1] } else { COLORS[0] };
            let _ = write!(
                svg,
                r#"<rect x="{x:.2}" y="{top:.2}" width="{:.2}" height="{h:.2}" fill="{color}"/><text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"#,
                slot * 0.7,
                x + slot * 0.35,
                TOP + plot_h + 14.0,
                escape(&bar.label)
            );
        }
        legend_entry(&mut svg, 0, "selected", COLORS[1]);
        legend_entry(&mut svg, 1, "remaining", COLORS[0]);
        svg.push_str("</svg>\n");
        svg
    }
}

fn header(title: &str) -> String {
    let mut svg = format!(
        "<svg version=\"1.1\" width=\"{WIDTH}\" height=\"{HEIGHT}\" xmlns=\"http://www.w3.org/2000/svg\" font-family=\"sans-serif\">\n<!-- funcqr {} -->\n",
        env!("CARGO_PKG_VERSION")
    );
    let _ = write!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/><text x="{:.2}" y="28" text-anchor="middle" font-size="16">{}</text>"#,
        LEFT + (WIDTH - LEFT - RIGHT) / 2.0,
        escape(title)
    );
    svg
}

fn frame(svg: &mut String, x_label: &str, y_label: &str) {
    let cx = LEFT + (WIDTH - LEFT - RIGHT) / 2.0;
    let cy = TOP + (HEIGHT - TOP - BOTTOM) / 2.0;
    let _ = write!(
        svg,
        r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle" font-size="13">{}</text><text x="22" y="{cy:.2}" text-anchor="middle" font-size="13" transform="rotate(-90 22 {cy:.2})">{}</text>"#,
        HEIGHT - 16.0,
        escape(x_label),
        escape(y_label)
    );
}

fn axes(svg: &mut String) {
    let _ = write!(
        svg,
        r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        WIDTH - LEFT - RIGHT,
        HEIGHT - TOP - BOTTOM
    );
}

fn legend_entry(svg: &mut String, index: usize, name: &str, color: &str) {
    let x = WIDTH - RIGHT + 15.0;
    let y = TOP + 10.0 + 20.0 * index as f64;
    let _ = write!(
        svg,
        r#"<rect x="{x:.2}" y="{:.2}" width="14" height="4" fill="{color}"/><text x="{:.2}" y="{:.2}" font-size="12">{}</text>"#,
        y - 2.0,
        x + 20.0,
        y + 4.0,
        escape(name)
    );
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Finite data range, widened by `pad` of its span without crossing zero;
/// never empty.
fn padded_range(values: impl Iterator<Item = f64>, pad: f64) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
        let w = lo.abs().max(1.0) * 0.5;
        return (lo - w, hi + w);
    }
    let p = (hi - lo) * pad;
    let floor = if lo >= 0.0 { 0.0 } else { f64::NEG_INFINITY };
    ((lo - p).max(floor), hi + p)
}

/// Round tick positions covering `[lo, hi]` with about `target` intervals.
pub fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let raw = (hi - lo) / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|f| f * mag)
        .find(|&s| s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).floor() as i64;
    let last = (hi / step).ceil() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn tick_label(value: f64, step: f64, log: bool) -> String {
    if log {
        let rounded = value.round();
        if (value - rounded).abs() < 1e-9 {
            return format!("1e{}", rounded as i64);
        }
        return format!("{:.3e}", 10f64.powf(value));
    }
    let decimals = (-step.log10().floor()).max(0.0) as usize + usize::from(step / 10f64.powf(step.log10().floor()) == 2.5);
    let text = format!("{value:.decimals$}");
    if text.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        "0".to_string()
    } else {
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_cover_range() {
        let t = nice_ticks(0.3, 9.7, 5);
        assert!(t[0] <= 0.3 && *t.last().unwrap() >= 9.7);
        assert_eq!(t, vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(tick_label(0.5, 0.5, false), "0.5");
        assert_eq!(tick_label(-0.0, 1.0, false), "0");
        assert_eq!(tick_label(3.0, 1.0, true), "1e3");
    }

    #[test]
    fn chart_is_deterministic_and_wellformed() {
        let make = || {
            Chart::new("A & B")
                .x_label("t")
                .y_label("y")
                .series(Series::indexed("one", &[1.0, 3.0, 2.0], Mark::Line))
                .series(Series::indexed("two", &[f64::NAN, 0.5, 0.1], Mark::Points))
                .to_svg()
        };
        let a = make();
        assert_eq!(a, make());
        assert!(a.starts_with("<svg"));
        assert!(a.trim_end().ends_with("</svg>"));
        assert!(a.contains("A &amp; B"));
        assert!(!a.contains("NaN"));
        assert_eq!(a.matches("<circle").count(), 2);
    }

    #[test]
    fn log_axis_drops_nonpositive() {
        let svg = Chart::new("r")
            .log_y()
            .series(Series::indexed("r", &[1.0, 0.1, 0.0, 0.01], Mark::Points))
            .to_svg();
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("1e-1"));
    }

    #[test]
    fn empty_and_constant_inputs_render() {
        assert!(Chart::new("empty").to_svg().contains("</svg>"));
        let svg = Chart::new("flat")
            .series(Series::indexed("c", &[2.0, 2.0], Mark::Line))
            .to_svg();
        assert!(!svg.contains("NaN"));
        let bars = BarChart::new("b", "v").bar("x", -1.0, true).bar("y", 2.0, false).to_svg();
        assert_eq!(bars.matches("<rect").count(), 6);
    }
}
