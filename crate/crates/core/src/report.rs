//! Report rendering: per-scenario AUROC box-plot data grouped by detector
//! and variant, plus a self-contained SVG page per scenario combining the
//! box plots with the rank-distance curves. No plotting dependencies; the
//! SVG is emitted directly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::{read_results, ExperimentResult};
use crate::scores::{Method, Variant};

/// Hier rows are summarized at these betas when present, mirroring the
/// headline comparison; otherwise every hier row counts.
const REPORT_BETAS: [f64; 2] = [10.0, 100.0];

/// Five-number summary plus count and mean.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

/// Linear-interpolation quantile of a sorted sample.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 < n {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    } else {
        sorted[n - 1]
    }
}

impl BoxStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        Some(BoxStats {
            count: sorted.len(),
            min: sorted[0],
            q1: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            q3: quantile(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        })
    }
}

/// `f_msp`, `h_msp`, ... group labels in presentation order.
fn group_order() -> [(Method, Variant, &'static str); 6] {
    [
        (Method::Msp, Variant::Flat, "f_msp"),
        (Method::Msp, Variant::Hier, "h_msp"),
        (Method::Odin, Variant::Flat, "f_odin"),
        (Method::Odin, Variant::Hier, "h_odin"),
        (Method::Dmd, Variant::Flat, "f_dmd"),
        (Method::Dmd, Variant::Hier, "h_dmd"),
    ]
}

fn group_values(rows: &[&ExperimentResult], method: Method, variant: Variant) -> Vec<f64> {
    let matching: Vec<&&ExperimentResult> = rows
        .iter()
        .filter(|r| r.method == method && r.variant == variant)
        .collect();
    if variant == Variant::Hier {
        let at_report_betas: Vec<f64> = matching
            .iter()
            .filter(|r| {
                r.beta
                    .map(|b| REPORT_BETAS.contains(&b))
                    .unwrap_or(false)
            })
            .map(|r| r.auroc)
            .collect();
        if !at_report_betas.is_empty() {
            return at_report_betas;
        }
    }
    matching.iter().map(|r| r.auroc).collect()
}

/// One rank-distance curve point per (variant, population, rank).
#[derive(Debug, Clone, Default)]
struct CurveData {
    /// variant -> (ranks, known (mean, ci), novel (mean, ci))
    by_variant: BTreeMap<String, Vec<(usize, f64, f64, f64, f64)>>,
}

fn load_curves(path: &Path) -> Result<CurveData> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut known: BTreeMap<(String, usize), (f64, f64)> = BTreeMap::new();
    let mut novel: BTreeMap<(String, usize), (f64, f64)> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let variant = record[0].to_string();
        let population = &record[1];
        let rank: usize = record[2]
            .parse()
            .map_err(|_| Error::Report(format!("bad rank '{}'", &record[2])))?;
        let mean: f64 = record[3]
            .parse()
            .map_err(|_| Error::Report(format!("bad mean '{}'", &record[3])))?;
        let ci: f64 = record[4]
            .parse()
            .map_err(|_| Error::Report(format!("bad ci '{}'", &record[4])))?;
        match population {
            "known" => {
                known.insert((variant, rank), (mean, ci));
            }
            "novel" => {
                novel.insert((variant, rank), (mean, ci));
            }
            other => return Err(Error::Report(format!("bad population '{}'", other))),
        }
    }
    let mut data = CurveData::default();
    for ((variant, rank), (km, kc)) in known {
        if let Some(&(nm, nc)) = novel.get(&(variant.clone(), rank)) {
            data.by_variant
                .entry(variant)
                .or_default()
                .push((rank, km, kc, nm, nc));
        }
    }
    for points in data.by_variant.values_mut() {
        points.sort_by_key(|p| p.0);
    }
    Ok(data)
}

/// Render per-scenario box-plot data and SVG pages from a sweep output
/// directory (`results.csv` plus optional `diagnostics/`). Returns the
/// written paths.
pub fn render_report(results_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let results_path = results_dir.join("results.csv");
    if !results_path.exists() {
        return Err(Error::Report(format!(
            "{} not found",
            results_path.display()
        )));
    }
    let rows = read_results(&results_path)?;
    if rows.is_empty() {
        return Err(Error::Report("results file has no rows".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let mut scenarios: Vec<String> = rows.iter().map(|r| r.scenario.clone()).collect();
    scenarios.sort();
    scenarios.dedup();

    // (a) box-plot data across scenarios.
    let boxplot_path = out_dir.join("boxplot_data.csv");
    {
        let mut w = csv::Writer::from_path(&boxplot_path)?;
        w.write_record([
            "scenario", "group", "count", "min", "q1", "median", "q3", "max", "mean",
        ])?;
        for scenario in &scenarios {
            let scoped: Vec<&ExperimentResult> =
                rows.iter().filter(|r| &r.scenario == scenario).collect();
            for (method, variant, label) in group_order() {
                let values = group_values(&scoped, method, variant);
                if let Some(stats) = BoxStats::from_values(&values) {
                    w.write_record([
                        scenario.as_str(),
                        label,
                        &stats.count.to_string(),
                        &format!("{}", stats.min),
                        &format!("{}", stats.q1),
                        &format!("{}", stats.median),
                        &format!("{}", stats.q3),
                        &format!("{}", stats.max),
                        &format!("{}", stats.mean),
                    ])?;
                }
            }
        }
        w.flush()?;
    }
    written.push(boxplot_path);

    // (b)+(d) per-scenario SVG with boxes and curves.
    for scenario in &scenarios {
        let scoped: Vec<&ExperimentResult> =
            rows.iter().filter(|r| &r.scenario == scenario).collect();
        let mut groups = Vec::new();
        for (method, variant, label) in group_order() {
            let values = group_values(&scoped, method, variant);
            if let Some(stats) = BoxStats::from_values(&values) {
                groups.push((label.to_string(), stats));
            }
        }
        let curve_path = results_dir
            .join("diagnostics")
            .join(scenario)
            .join("rank_distance.csv");
        let curves = if curve_path.exists() {
            Some(load_curves(&curve_path)?)
        } else {
            None
        };
        let svg = scenario_svg(scenario, &groups, curves.as_ref());
        let svg_path = out_dir.join(format!("{}.svg", scenario));
        std::fs::write(&svg_path, svg)?;
        written.push(svg_path);
    }
    Ok(written)
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Canvas {
    body: String,
}

impl Canvas {
    fn new() -> Self {
        Canvas { body: String::new() }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, style: &str) {
        writeln!(
            self.body,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" style="{}"/>"#,
            x1, y1, x2, y2, style
        )
        .unwrap();
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, style: &str) {
        writeln!(
            self.body,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" style="{}"/>"#,
            x, y, w, h, style
        )
        .unwrap();
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, size: f64, content: &str) {
        writeln!(
            self.body,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="{}" font-family="sans-serif" font-size="{}">{}</text>"#,
            x, y, anchor, size, esc(content)
        )
        .unwrap();
    }

    fn poly(&mut self, tag: &str, points: &[(f64, f64)], style: &str) {
        let coords: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", x, y))
            .collect();
        writeln!(
            self.body,
            r#"<{} points="{}" style="{}"/>"#,
            tag,
            coords.join(" "),
            style
        )
        .unwrap();
    }
}

/// Map a data y-value to pixel space.
fn scale(v: f64, lo: f64, hi: f64, top: f64, bottom: f64) -> f64 {
    bottom - (v - lo) / (hi - lo) * (bottom - top)
}

fn scenario_svg(
    scenario: &str,
    groups: &[(String, BoxStats)],
    curves: Option<&CurveData>,
) -> String {
    let width = 900.0;
    let box_panel_height = 360.0;
    let curve_panel_height = if curves.is_some() { 320.0 } else { 0.0 };
    let height = box_panel_height + curve_panel_height + 40.0;

    let mut canvas = Canvas::new();
    canvas.text(
        width / 2.0,
        24.0,
        "middle",
        16.0,
        &format!("Scenario {}: detection AUROC and rank-distance curves", scenario),
    );

    // Box-plot panel.
    let (left, right, top, bottom) = (70.0, width - 30.0, 48.0, box_panel_height - 40.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, s) in groups {
        lo = lo.min(s.min);
        hi = hi.max(s.max);
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    let pad = ((hi - lo) * 0.08).max(0.02);
    lo = (lo - pad).max(0.0);
    hi = (hi + pad).min(1.0);
    if hi - lo < 1e-9 {
        lo = (lo - 0.05).max(0.0);
        hi = (hi + 0.05).min(1.0);
    }
    canvas.line(left, top, left, bottom, "stroke:black;stroke-width:1");
    canvas.line(left, bottom, right, bottom, "stroke:black;stroke-width:1");
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let y = scale(v, lo, hi, top, bottom);
        canvas.line(left - 4.0, y, left, y, "stroke:black;stroke-width:1");
        canvas.text(left - 8.0, y + 4.0, "end", 11.0, &format!("{:.2}", v));
        canvas.line(left, y, right, y, "stroke:#dddddd;stroke-width:0.5");
    }
    canvas.text(18.0, (top + bottom) / 2.0, "middle", 12.0, "AUROC");

    let slot = (right - left) / groups.len().max(1) as f64;
    for (i, (label, s)) in groups.iter().enumerate() {
        let cx = left + slot * (i as f64 + 0.5);
        let half = (slot * 0.28).min(34.0);
        let y_min = scale(s.min, lo, hi, top, bottom);
        let y_max = scale(s.max, lo, hi, top, bottom);
        let y_q1 = scale(s.q1, lo, hi, top, bottom);
        let y_q3 = scale(s.q3, lo, hi, top, bottom);
        let y_med = scale(s.median, lo, hi, top, bottom);
        let fill = if label.starts_with("h_") {
            "fill:#9467bd;fill-opacity:0.35;stroke:#5e3c99"
        } else {
            "fill:#2ca02c;fill-opacity:0.35;stroke:#1b7837"
        };
        canvas.line(cx, y_min, cx, y_q1, "stroke:black;stroke-width:1");
        canvas.line(cx, y_q3, cx, y_max, "stroke:black;stroke-width:1");
        canvas.line(cx - half * 0.6, y_min, cx + half * 0.6, y_min, "stroke:black;stroke-width:1");
        canvas.line(cx - half * 0.6, y_max, cx + half * 0.6, y_max, "stroke:black;stroke-width:1");
        canvas.rect(cx - half, y_q3, half * 2.0, (y_q1 - y_q3).abs().max(0.5), fill);
        canvas.line(cx - half, y_med, cx + half, y_med, "stroke:black;stroke-width:1.6");
        canvas.text(cx, bottom + 16.0, "middle", 12.0, label);
        // Dotted separators between detector families.
        if i % 2 == 1 && i + 1 < groups.len() {
            let x = left + slot * (i + 1) as f64;
            canvas.line(x, top, x, bottom, "stroke:#888888;stroke-width:1;stroke-dasharray:4 4");
        }
    }

    // Rank-distance panel: one sub-plot per variant.
    if let Some(curves) = curves {
        let panel_top = box_panel_height + 30.0;
        let panel_bottom = panel_top + curve_panel_height - 70.0;
        let variants: Vec<&String> = curves.by_variant.keys().collect();
        let n = variants.len().max(1);
        let sub_width = (width - 100.0) / n as f64;
        for (vi, variant) in variants.iter().enumerate() {
            let sub_left = 70.0 + sub_width * vi as f64;
            let sub_right = sub_left + sub_width - 40.0;
            let points = &curves.by_variant[*variant];
            let max_rank = points.iter().map(|p| p.0).max().unwrap_or(2).max(2);
            let x_of = |rank: usize| -> f64 {
                if max_rank == 2 {
                    (sub_left + sub_right) / 2.0
                } else {
                    sub_left + (rank - 2) as f64 / (max_rank - 2) as f64 * (sub_right - sub_left)
                }
            };
            canvas.line(sub_left, panel_top, sub_left, panel_bottom, "stroke:black;stroke-width:1");
            canvas.line(sub_left, panel_bottom, sub_right, panel_bottom, "stroke:black;stroke-width:1");
            for i in 0..=2 {
                let v = i as f64 / 2.0;
                let y = scale(v, 0.0, 1.0, panel_top, panel_bottom);
                canvas.line(sub_left - 4.0, y, sub_left, y, "stroke:black;stroke-width:1");
                canvas.text(sub_left - 8.0, y + 4.0, "end", 10.0, &format!("{:.1}", v));
            }
            for (pop, color, band) in [
                ("known", "#2ca02c", "fill:#2ca02c;fill-opacity:0.15;stroke:none"),
                ("novel", "#9467bd", "fill:#9467bd;fill-opacity:0.15;stroke:none"),
            ] {
                let series: Vec<(usize, f64, f64)> = points
                    .iter()
                    .map(|&(rank, km, kc, nm, nc)| {
                        if pop == "known" {
                            (rank, km, kc)
                        } else {
                            (rank, nm, nc)
                        }
                    })
                    .collect();
                let mut band_points: Vec<(f64, f64)> = series
                    .iter()
                    .map(|&(r, m, c)| {
                        (x_of(r), scale((m + c).min(1.0), 0.0, 1.0, panel_top, panel_bottom))
                    })
                    .collect();
                band_points.extend(series.iter().rev().map(|&(r, m, c)| {
                    (x_of(r), scale((m - c).max(0.0), 0.0, 1.0, panel_top, panel_bottom))
                }));
                if band_points.len() >= 3 {
                    canvas.poly("polygon", &band_points, band);
                }
                let line: Vec<(f64, f64)> = series
                    .iter()
                    .map(|&(r, m, _)| (x_of(r), scale(m, 0.0, 1.0, panel_top, panel_bottom)))
                    .collect();
                if line.len() >= 2 {
                    canvas.poly(
                        "polyline",
                        &line,
                        &format!("fill:none;stroke:{};stroke-width:1.8", color),
                    );
                } else if let Some(&(x, y)) = line.first() {
                    canvas.rect(x - 2.0, y - 2.0, 4.0, 4.0, &format!("fill:{}", color));
                }
            }
            canvas.text(
                (sub_left + sub_right) / 2.0,
                panel_bottom + 18.0,
                "middle",
                12.0,
                &format!("{} - prediction rank", variant),
            );
        }
        canvas.text(
            34.0,
            (panel_top + panel_bottom) / 2.0,
            "middle",
            11.0,
            "distance",
        );
        canvas.text(
            width - 160.0,
            panel_top - 8.0,
            "start",
            11.0,
            "green: known, purple: novel",
        );
    }

    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n{}</svg>\n",
        width, height, width, height, canvas.body
    )
}
