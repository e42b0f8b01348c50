use std::fmt::Write as _;
use std::path::Path;

use super::SummaryRow;
use crate::error::{LabError, Result};

const WIDTH: f64 = 680.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 140.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

fn log_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .map(f64::log10)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if hi - lo < 1e-9 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

/// Log-log plot of median steps-to-threshold against the learning rate, one
/// polyline per rule. Cells whose median is censored sit on the top axis as
/// open markers.
pub fn render_svg(rows: &[SummaryRow]) -> Result<String> {
    let rows: Vec<&SummaryRow> = rows
        .iter()
        .filter(|r| r.eta > 0.0 && r.median > 0.0)
        .collect();
    if rows.is_empty() {
        return Err(LabError::EmptyPlot("no summary rows with positive η and steps".into()));
    }
    let mut rules: Vec<&str> = Vec::new();
    for r in &rows {
        if !rules.contains(&r.rule.as_str()) {
            rules.push(&r.rule);
        }
    }
    let (x_lo, x_hi) = log_range(rows.iter().map(|r| r.eta));
    let (y_lo, y_hi) = log_range(rows.iter().map(|r| r.median));
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |eta: f64| LEFT + (eta.log10() - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |steps: f64| TOP + (y_hi - steps.log10()) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for k in (x_lo.ceil() as i32)..=(x_hi.floor() as i32) {
        let x = px(10f64.powi(k));
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{k}</text>"##,
            TOP + plot_h,
            TOP + plot_h + 16.0
        );
    }
    for k in (y_lo.ceil() as i32)..=(y_hi.floor() as i32) {
        let y = py(10f64.powi(k));
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{k}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">learning rate</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">median steps to threshold</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    for (i, rule) in rules.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut points: Vec<&&SummaryRow> = rows.iter().filter(|r| r.rule == *rule).collect();
        points.sort_by(|a, b| a.eta.total_cmp(&b.eta));
        let coords: Vec<(f64, f64, bool)> = points
            .iter()
            .map(|r| {
                let censored = r.median_censored();
                let y = if censored { TOP } else { py(r.median) };
                (px(r.eta), y, censored)
            })
            .collect();
        let path: Vec<String> = coords.iter().map(|(x, y, _)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            svg,
            r#"<polyline data-rule="{rule}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        );
        for (x, y, censored) in coords {
            let fill = if censored { "white" } else { color };
            let _ = writeln!(
                svg,
                r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{fill}" stroke="{color}" stroke-width="1.5"/>"#
            );
        }
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{:.2}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{rule}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0
        );
    }
    let _ = writeln!(svg, "</svg>");
    Ok(svg)
}

/// Renders and writes the plot. Nothing is written when there is nothing to plot.
pub fn emit_plot(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let svg = render_svg(rows)?;
    std::fs::write(path, svg)?;
    Ok(())
}
