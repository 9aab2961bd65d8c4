//! SVG scatter plots of 2-D embeddings, one circle per point colored by label.

use crate::error::{Error, Result};
use crate::output::{atomic_write, EmbeddingResult};
use crate::scalar::Real;
use std::fmt::Write as _;
use std::path::Path;

/// Tableau-10 palette; labels cycle through it.
pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

const CANVAS: f64 = 800.0;
const PAD: f64 = 50.0;
const LEGEND_W: f64 = 110.0;

/// Fill color for a label.
pub fn label_color(label: usize) -> &'static str {
    PALETTE[label % PALETTE.len()]
}

/// Data bounds widened by 5% per side; degenerate extents are padded to a
/// unit-width window so the viewport never collapses.
fn padded_bounds(lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    if span > 0.0 {
        (lo - 0.05 * span, hi + 0.05 * span)
    } else {
        let half = 0.5 * lo.abs().max(1.0);
        (lo - half, hi + half)
    }
}

/// Renders the SVG document for a 2-D embedding.
pub fn render_svg<T: Real>(result: &EmbeddingResult<T>) -> Result<String> {
    if result.dim() != 2 {
        return Err(Error::UnsupportedDimension(result.dim()));
    }
    let pts: Vec<(f64, f64)> = result
        .coords
        .row_iter()
        .map(|r| (r[0].to_f64().unwrap(), r[1].to_f64().unwrap()))
        .collect();
    let (xlo, xhi) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (ylo, yhi) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let (xlo, xhi) = if pts.is_empty() { (-1.0, 1.0) } else { padded_bounds(xlo, xhi) };
    let (ylo, yhi) = if pts.is_empty() { (-1.0, 1.0) } else { padded_bounds(ylo, yhi) };

    let plot_w = CANVAS - 2.0 * PAD;
    let plot_h = CANVAS - 2.0 * PAD;
    let sx = |x: f64| PAD + (x - xlo) / (xhi - xlo) * plot_w;
    let sy = |y: f64| PAD + (yhi - y) / (yhi - ylo) * plot_h;
    let radius = if pts.len() > 2000 { 1.5 } else { 3.0 };

    let mut s = String::new();
    let width = CANVAS + LEGEND_W;
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{CANVAS}" viewBox="0 0 {width} {CANVAS}">"#
    );
    let _ = writeln!(s, "<title>{}</title>", xml_escape(&result.source_dataset));
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{width}" height="{CANVAS}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    let tick = |s: &mut String, x: f64, y: f64, anchor: &str, v: f64| {
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="11" text-anchor="{anchor}">{v:.3}</text>"#
        );
    };
    tick(&mut s, PAD, CANVAS - PAD + 16.0, "start", xlo);
    tick(&mut s, CANVAS - PAD, CANVAS - PAD + 16.0, "end", xhi);
    tick(&mut s, PAD - 4.0, CANVAS - PAD, "end", ylo);
    tick(&mut s, PAD - 4.0, PAD + 10.0, "end", yhi);

    let _ = writeln!(s, r#"<g stroke="none" fill-opacity="0.8">"#);
    for (i, &(x, y)) in pts.iter().enumerate() {
        let fill = result
            .labels
            .as_ref()
            .map_or(PALETTE[0], |l| label_color(l[i]));
        let _ = writeln!(s, r#"<circle cx="{:.3}" cy="{:.3}" r="{radius}" fill="{fill}"/>"#, sx(x), sy(y));
    }
    let _ = writeln!(s, "</g>");

    if let Some(labels) = &result.labels {
        let mut classes: Vec<usize> = labels.clone();
        classes.sort_unstable();
        classes.dedup();
        for (row, class) in classes.iter().take(40).enumerate() {
            let y = PAD + row as f64 * 16.0;
            let x = CANVAS + 10.0;
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="10" height="10" fill="{}"/>"#,
                label_color(*class)
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{class}</text>"#,
                x + 16.0,
                y + 9.0
            );
        }
    }
    let _ = writeln!(s, "</svg>");
    Ok(s)
}

/// Writes [`render_svg`] output to `path`.
pub fn plot_svg<T: Real>(result: &EmbeddingResult<T>, path: impl AsRef<Path>) -> Result<()> {
    let doc = render_svg(result)?;
    atomic_write(path, |w| w.write_all(doc.as_bytes()))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
