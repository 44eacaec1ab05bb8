//! Canonical JSON export and SVG rendering of association matrices.
//!
//! JSON objects have sorted keys and every float is rounded to 9 significant
//! digits, so a document is byte-stable for a given matrix. The SVG is a
//! plain grid: one background rect per cell colored on a white to dark-red
//! ramp, a polyline per cell curve, and a strength colorbar.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::matrix::{AssociationMatrix, MatrixCell};

pub const SIGNIFICANT_DIGITS: usize = 9;
pub const RAMP_LOW: [u8; 3] = [0xFF, 0xFF, 0xFF];
pub const RAMP_HIGH: [u8; 3] = [0x8B, 0x00, 0x00];
pub const CURVE_LIGHT: &str = "#FFFFFF";
pub const CURVE_DARK: &str = "#666666";

#[derive(Error, Debug)]
pub enum RenderError {
    #[error("invalid matrix JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid render style: {0}")]
    Style(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderStyle {
    pub cell_px: u32,
    pub curve_points: usize,
    pub font_px: u32,
    pub margin_px: u32,
    /// Space reserved for row and column labels.
    pub label_px: u32,
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self {
            cell_px: 64,
            curve_points: 64,
            font_px: 11,
            margin_px: 12,
            label_px: 72,
        }
    }
}

impl RenderStyle {
    pub fn validate(&self) -> Result<(), RenderError> {
        if self.cell_px < 16 {
            return Err(RenderError::Style(format!("cell_px {} must be >= 16", self.cell_px)));
        }
        if self.curve_points < 2 {
            return Err(RenderError::Style(format!(
                "curve_points {} must be >= 2",
                self.curve_points
            )));
        }
        Ok(())
    }
}

/// Rounds to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_sig(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v)
        .parse()
        .expect("formatted float parses")
}

fn canonicalize(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let f = n.as_f64().expect("f64 number");
            serde_json::Number::from_f64(round_sig(f)).map_or(Value::Null, Value::Number)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonicalize).collect()),
        // serde_json's default map is ordered by key
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, canonicalize(v))).collect()),
        other => other,
    }
}

/// The canonical JSON value of a matrix.
pub fn export_value(m: &AssociationMatrix) -> Value {
    canonicalize(serde_json::to_value(m).expect("matrix serializes"))
}

/// Pretty-printed canonical JSON document (trailing newline included).
pub fn export_json(m: &AssociationMatrix) -> String {
    let mut s = serde_json::to_string_pretty(&export_value(m)).expect("value serializes");
    s.push('\n');
    s
}

pub fn parse_json(s: &str) -> Result<AssociationMatrix, RenderError> {
    Ok(serde_json::from_str(s)?)
}

/// Continuous ramp color for a strength (clamped into [0, 1]).
pub fn ramp_rgb(strength: f64) -> [f64; 3] {
    let s = if strength.is_nan() { 0.0 } else { strength.clamp(0.0, 1.0) };
    std::array::from_fn(|i| {
        let (lo, hi) = (RAMP_LOW[i] as f64, RAMP_HIGH[i] as f64);
        lo + s * (hi - lo)
    })
}

pub fn ramp_hex(strength: f64) -> String {
    let [r, g, b] = ramp_rgb(strength).map(|c| c.round() as u8);
    format!("#{r:02X}{g:02X}{b:02X}")
}

/// Relative luminance with channels scaled to [0, 1].
pub fn luminance(rgb: [f64; 3]) -> f64 {
    (0.2126 * rgb[0] + 0.7152 * rgb[1] + 0.0722 * rgb[2]) / 255.0
}

pub fn curve_color(strength: f64) -> &'static str {
    if luminance(ramp_rgb(strength)) < 0.5 {
        CURVE_LIGHT
    } else {
        CURVE_DARK
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Linear resampling of a polyline onto `m` equally spaced `u` values.
pub fn resample(curve: &[[f64; 2]], m: usize) -> Vec<[f64; 2]> {
    if curve.len() < 2 {
        return curve.to_vec();
    }
    let (u0, u1) = (curve[0][0], curve[curve.len() - 1][0]);
    let mut j = 0;
    (0..m.max(2))
        .map(|k| {
            let u = u0 + (u1 - u0) * k as f64 / (m.max(2) - 1) as f64;
            while j + 2 < curve.len() && curve[j + 1][0] < u {
                j += 1;
            }
            let ([ua, va], [ub, vb]) = (curve[j], curve[j + 1]);
            let t = if ub > ua { ((u - ua) / (ub - ua)).clamp(0.0, 1.0) } else { 0.0 };
            [u, va + t * (vb - va)]
        })
        .collect()
}

fn cell_polyline(curve: &[[f64; 2]], x0: f64, y0: f64, size: f64, m: usize) -> String {
    let pts = if curve.len() == m { curve.to_vec() } else { resample(curve, m) };
    let (lo, hi) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[1]), hi.max(p[1])));
    let pad = 0.05 * size;
    let inner = size - 2.0 * pad;
    let (u_lo, u_hi) = (pts[0][0], pts[pts.len() - 1][0]);
    let mut out = String::new();
    for (i, [u, v]) in pts.iter().enumerate() {
        let fx = if u_hi > u_lo { (u - u_lo) / (u_hi - u_lo) } else { 0.5 };
        let fy = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{:.2},{:.2}", x0 + pad + fx * inner, y0 + size - pad - fy * inner);
    }
    out
}

fn render_cell(out: &mut String, cell: &MatrixCell, x: f64, y: f64, style: &RenderStyle, numeric: bool) {
    let size = style.cell_px as f64;
    let _ = writeln!(
        out,
        r##"<rect class="cell" x="{x:.2}" y="{y:.2}" width="{size:.2}" height="{size:.2}" fill="{}" stroke="#DDDDDD" stroke-width="0.5"><title>{} ← {}: {:.3}</title></rect>"##,
        ramp_hex(cell.strength),
        escape(&cell.row),
        escape(&cell.col),
        cell.strength
    );
    let ink = curve_color(cell.strength);
    if numeric {
        let _ = writeln!(
            out,
            r#"<text class="value" x="{:.2}" y="{:.2}" fill="{ink}" font-size="{}" text-anchor="middle" dominant-baseline="central">{:.2}</text>"#,
            x + size / 2.0,
            y + size / 2.0,
            style.font_px,
            cell.strength
        );
    } else if let Some(curve) = cell.curve.as_ref().filter(|c| !c.is_empty()) {
        let _ = writeln!(
            out,
            r#"<polyline class="curve" points="{}" fill="none" stroke="{ink}" stroke-width="1.5"/>"#,
            cell_polyline(curve, x, y, size, style.curve_points)
        );
    }
}

/// SVG 1.1 document for `m`. Rows are targets, columns are inputs.
pub fn render_svg(m: &AssociationMatrix, style: &RenderStyle) -> Result<String, RenderError> {
    style.validate()?;
    let rows = m.row_labels();
    let cols = &m.labels;
    let cell = style.cell_px as f64;
    let margin = style.margin_px as f64;
    let label = style.label_px as f64;
    let font = style.font_px as f64;
    let grid_x = margin + label;
    let grid_y = margin + label;
    let grid_w = cell * cols.len() as f64;
    let grid_h = cell * rows.len().max(1) as f64;
    let bar_w = 14.0;
    let bar_x = grid_x + grid_w + margin;
    let width = bar_x + bar_w + 4.0 * font + margin;
    let height = grid_y + grid_h + margin + font;

    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, "<title>{} matrix</title>", m.kind.as_str().to_uppercase());
    let _ = writeln!(
        out,
        r##"<defs><linearGradient id="ramp" x1="0" y1="1" x2="0" y2="0"><stop offset="0" stop-color="{}"/><stop offset="1" stop-color="{}"/></linearGradient></defs>"##,
        ramp_hex(0.0),
        ramp_hex(1.0)
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#FFFFFF"/>"##);

    for (j, c) in cols.iter().enumerate() {
        let cx = grid_x + cell * (j as f64 + 0.5);
        let _ = writeln!(
            out,
            r#"<text class="col-label" x="{cx:.2}" y="{:.2}" font-size="{}" text-anchor="start" transform="rotate(-45 {cx:.2} {:.2})">{}</text>"#,
            grid_y - 4.0,
            style.font_px,
            grid_y - 4.0,
            escape(c)
        );
    }
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text class="row-label" x="{:.2}" y="{:.2}" font-size="{}" text-anchor="end" dominant-baseline="central">{}</text>"#,
            grid_x - 4.0,
            grid_y + cell * (i as f64 + 0.5),
            style.font_px,
            escape(r)
        );
    }

    let numeric = m.kind.is_baseline();
    for (i, r) in rows.iter().enumerate() {
        for (j, c) in cols.iter().enumerate() {
            if let Some(mc) = m.cell(r, c) {
                render_cell(&mut out, mc, grid_x + cell * j as f64, grid_y + cell * i as f64, style, numeric);
            }
        }
    }

    let _ = writeln!(
        out,
        r##"<rect class="legend" x="{bar_x:.2}" y="{grid_y:.2}" width="{bar_w:.2}" height="{grid_h:.2}" fill="url(#ramp)" stroke="#999999" stroke-width="0.5"/>"##
    );
    for (value, y) in [(1.0, grid_y), (0.5, grid_y + grid_h / 2.0), (0.0, grid_y + grid_h)] {
        let _ = writeln!(
            out,
            r#"<text class="legend-label" x="{:.2}" y="{y:.2}" font-size="{}" dominant-baseline="central">{value:.1}</text>"#,
            bar_x + bar_w + 3.0,
            style.font_px
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}
