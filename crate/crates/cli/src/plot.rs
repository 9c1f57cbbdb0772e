//! Static SVG views of the CSV outputs. Every label printed in a plot is a
//! value copied verbatim from the plotted CSV.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::CliError;
use crate::manifest::{PlotSpec, RunManifest};
use crate::output::{format_value, write_atomic, Table};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;
const MAX_SNAPSHOTS: usize = 9;
const PALETTE: [&str; 9] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf"];

struct Series {
    label: String,
    x: Vec<f64>,
    y: Vec<f64>,
}

/// Draws every plottable file of a manifest next to it; returns the SVG
/// paths relative to `dir`.
pub fn emit_plots(manifest: &RunManifest, dir: &Path) -> Result<Vec<String>, CliError> {
    let mut written = Vec::new();
    for file in &manifest.files {
        let Some(spec) = &file.plot else { continue };
        let table = Table::read(&dir.join(&file.path))?;
        let svg = match spec {
            PlotSpec::Snapshots { grid, title } => {
                let grid = Table::read(&dir.join(grid))?;
                let x = grid.column("x").ok_or_else(|| CliError::Config(format!("{}: no x column", file.path)))?;
                render(title, &table.columns[0], "density", &snapshots(&table, &x), false)
            }
            PlotSpec::Lines { x, y, title, markers } => {
                let xs = table.column(x).ok_or_else(|| CliError::Config(format!("{}: no column {x}", file.path)))?;
                let series = y
                    .iter()
                    .map(|name| {
                        let ys = table.column(name).ok_or_else(|| CliError::Config(format!("{}: no column {name}", file.path)))?;
                        Ok(Series { label: name.clone(), x: xs.clone(), y: ys })
                    })
                    .collect::<Result<Vec<_>, CliError>>()?;
                render(title, x, "", &series, *markers)
            }
        };
        let name = PathBuf::from(&file.path).with_extension("svg");
        write_atomic(&dir.join(&name), svg.as_bytes())?;
        written.push(name.to_string_lossy().into_owned());
    }
    Ok(written)
}

fn snapshots(table: &Table, x: &[f64]) -> Vec<Series> {
    let rows = table.rows.len();
    let picks: Vec<usize> = if rows <= MAX_SNAPSHOTS {
        (0..rows).collect()
    } else {
        (0..MAX_SNAPSHOTS).map(|i| i * (rows - 1) / (MAX_SNAPSHOTS - 1)).collect()
    };
    picks
        .into_iter()
        .map(|r| {
            let row = &table.rows[r];
            Series { label: format!("{} = {}", table.columns[0], format_value(row[0])), x: x.to_vec(), y: row[1..].to_vec() }
        })
        .collect()
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn render(title: &str, x_label: &str, y_label: &str, series: &[Series], markers: bool) -> String {
    let (x0, x1) = extent(series.iter().flat_map(|s| s.x.iter().copied()));
    let (y0, y1) = extent(series.iter().flat_map(|s| s.y.iter().copied()));
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let px = |x: f64| MARGIN + (x - x0) / span(x0, x1) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / span(y0, y1) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    if x0.is_finite() && y0.is_finite() {
        let bottom = HEIGHT - MARGIN + 14.0;
        let _ = writeln!(svg, r#"<text x="{MARGIN}" y="{bottom}">{}</text>"#, format_value(x0));
        let _ = writeln!(svg, r#"<text x="{}" y="{bottom}" text-anchor="end">{}</text>"#, WIDTH - MARGIN, format_value(x1));
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 20.0, escape(x_label));
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, MARGIN + 4.0, HEIGHT - MARGIN - 4.0, format_value(y0));
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, MARGIN + 4.0, MARGIN + 12.0, format_value(y1));
        if !y_label.is_empty() {
            let _ = writeln!(svg, r#"<text x="{MARGIN}" y="{}">{}</text>"#, MARGIN - 6.0, escape(y_label));
        }
    }
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = s
            .x
            .iter()
            .zip(&s.y)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, points.join(" "));
        if markers {
            for p in &points {
                let (cx, cy) = p.split_once(',').unwrap_or(("0", "0"));
                let _ = writeln!(svg, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
            }
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{color}" text-anchor="end">{}</text>"#,
            WIDTH - MARGIN - 6.0,
            MARGIN + 14.0 + 12.0 * k as f64,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
