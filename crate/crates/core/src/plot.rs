//! Minimal SVG line charts for regret and behavioral-error curves.

use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiments::table::{RunMethod, SummaryRow};
use crate::experiments::TRAJECTORY_COLUMNS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Regret,
    Error,
}

impl PlotKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "regret" => Ok(PlotKind::Regret),
            "error" => Ok(PlotKind::Error),
            other => Err(Error::domain(format!(
                "unknown plot kind `{other}` (expected regret or error)"
            ))),
        }
    }

    pub fn y_label(self) -> &'static str {
        match self {
            PlotKind::Regret => "R(t)",
            PlotKind::Error => "E(t)",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

/// Per-step curves read back from a trajectory CSV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryCurves {
    pub t: Vec<f64>,
    pub regret: Vec<f64>,
    pub error: Vec<f64>,
}

impl TrajectoryCurves {
    pub fn series(&self, label: impl Into<String>, kind: PlotKind) -> Series {
        let ys = match kind {
            PlotKind::Regret => &self.regret,
            PlotKind::Error => &self.error,
        };
        Series {
            label: label.into(),
            points: self.t.iter().copied().zip(ys.iter().copied()).collect(),
        }
    }
}

pub fn read_trajectory_csv<R: Read>(reader: R, source_name: &str) -> Result<TrajectoryCurves> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let missing: Vec<String> = TRAJECTORY_COLUMNS
        .iter()
        .filter(|c| !headers.iter().any(|h| h == **c))
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingColumns(missing));
    }
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .expect("checked above")
    };
    let (it, ir, ie) = (col("t"), col("cum_avg_regret"), col("cum_error"));
    let mut curves = TrajectoryCurves::default();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            let field = rec.get(i).unwrap_or("");
            field.parse().map_err(|_| {
                Error::parse(
                    source_name,
                    format!("row {}: bad number `{field}`", line + 2),
                )
            })
        };
        curves.t.push(num(it)?);
        curves.regret.push(num(ir)?);
        curves.error.push(num(ie)?);
    }
    Ok(curves)
}

/// Endpoint values from the `AGG` rows of a summary: one line over σ per
/// (method, N), plus a flat line per baseline spanning the σ range.
pub fn summary_series(rows: &[SummaryRow], kind: PlotKind) -> Vec<Series> {
    let aggs: Vec<&SummaryRow> = rows.iter().filter(|r| r.is_aggregate()).collect();
    let value = |r: &SummaryRow| match kind {
        PlotKind::Regret => r.regret,
        PlotKind::Error => r.error,
    };
    let sigmas: Vec<f64> = aggs.iter().filter_map(|r| r.sigma).collect();
    let lo = sigmas.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sigmas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };

    let mut out: Vec<Series> = Vec::new();
    for r in &aggs {
        match (r.sigma, r.budget) {
            (Some(s), budget) => {
                let label = match budget {
                    Some(n) => format!("{} N={n}", r.method),
                    None => r.method.to_string(),
                };
                match out.iter_mut().find(|x| x.label == label) {
                    Some(series) => series.points.push((s, value(r))),
                    None => out.push(Series {
                        label,
                        points: vec![(s, value(r))],
                    }),
                }
            }
            (None, _) => out.push(Series {
                label: r.method.to_string(),
                points: vec![(lo, value(r)), (hi, value(r))],
            }),
        }
    }
    for s in &mut out {
        s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    // baselines last so the legend lists the blended runs first
    out.sort_by_key(|s| matches!(s.label.as_str(), l if l == RunMethod::Mask.as_str() || l == RunMethod::Cts.as_str()));
    out
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 170.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn span(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

impl LineChart {
    fn check(&self) -> Result<()> {
        if self.series.is_empty() || self.series.iter().all(|s| s.points.is_empty()) {
            return Err(Error::domain("nothing to plot: no data points"));
        }
        if self
            .series
            .iter()
            .flat_map(|s| &s.points)
            .any(|(x, y)| !x.is_finite() || !y.is_finite())
        {
            return Err(Error::NumericDomain(
                "plot data contains non-finite values".into(),
            ));
        }
        Ok(())
    }

    pub fn to_svg(&self) -> Result<String> {
        self.check()?;
        let pts = || self.series.iter().flat_map(|s| s.points.iter());
        let (x0, x1) = span(
            pts().map(|p| p.0).fold(f64::INFINITY, f64::min),
            pts().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
        );
        let (y0, y1) = span(
            pts().map(|p| p.1).fold(f64::INFINITY, f64::min).min(0.0),
            pts().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
        );
        let pw = WIDTH - MARGIN_L - MARGIN_R;
        let ph = HEIGHT - MARGIN_T - MARGIN_B;
        let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| MARGIN_T + ph - (y - y0) / (y1 - y0) * ph;

        let mut svg = String::new();
        // writing to a String cannot fail
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            MARGIN_L + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            svg,
            r#"<g class="axes" stroke="black"><line x1="{MARGIN_L}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" y2="{b}"/></g>"#,
            b = MARGIN_T + ph,
            r = MARGIN_L + pw
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                sx(xv),
                MARGIN_T + ph + 18.0,
                tick(xv)
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                MARGIN_L - 6.0,
                sy(yv) + 4.0,
                tick(yv)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text class="x-label" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN_L + pw / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text class="y-label" x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            MARGIN_T + ph / 2.0,
            MARGIN_T + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let coords: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline data-label="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                escape(&s.label),
                coords.join(" ")
            );
            let ly = MARGIN_T + 10.0 + 18.0 * i as f64;
            let lx = MARGIN_L + pw + 12.0;
            let _ = writeln!(
                svg,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                lx + 18.0,
                lx + 24.0,
                ly + 4.0,
                escape(&s.label)
            );
        }
        svg.push_str("</svg>\n");
        Ok(svg)
    }

    /// Renders and writes the chart. Nothing is written on error.
    pub fn write(&self, path: &Path) -> Result<()> {
        let svg = self.to_svg()?;
        fs::write(path, svg)?;
        Ok(())
    }
}

fn tick(v: f64) -> String {
    if v == v.round() && v.abs() < 1e9 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}
