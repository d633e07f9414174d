//! Deterministic SVG scatter plots of particle frames.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::particles::{ParticleFrame, ParticleKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RenderError {
    #[error("unknown field '{0}' (known: {known})", known = FIELDS.join(", "))]
    UnknownField(String),
    #[error("axes must be two distinct indices in 0..3")]
    BadAxes,
}

/// Colourable per-particle fields.
pub const FIELDS: [&str; 9] = ["speed", "vx", "vy", "vz", "rho", "p", "mass", "group", "kind"];

/// Camera and colouring for [`render_snapshot`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewSpec {
    /// Horizontal and vertical global axes: (0, 2) is a side view, (0, 1) a
    /// plan view.
    pub axes: (usize, usize),
    pub color_by: String,
    /// Only particles with |x[axis] − value| ≤ band, if set.
    pub slice: Option<(usize, f64, f64)>,
    pub include_boundaries: bool,
    pub width_px: u32,
    pub height_px: u32,
    pub title: String,
}

impl Default for ViewSpec {
    fn default() -> Self {
        Self {
            axes: (0, 2),
            color_by: "speed".into(),
            slice: None,
            include_boundaries: true,
            width_px: 800,
            height_px: 500,
            title: String::new(),
        }
    }
}

impl ViewSpec {
    pub fn side(color_by: &str) -> Self {
        Self {
            color_by: color_by.into(),
            ..Self::default()
        }
    }

    pub fn plan(color_by: &str) -> Self {
        Self {
            axes: (0, 1),
            color_by: color_by.into(),
            ..Self::default()
        }
    }
}

pub fn field_value(frame: &ParticleFrame, field: &str, i: usize) -> Option<f64> {
    Some(match field {
        "speed" => frame.velocity[i].norm(),
        "vx" => frame.velocity[i].x,
        "vy" => frame.velocity[i].y,
        "vz" => frame.velocity[i].z,
        "rho" => frame.density[i],
        "p" => frame.pressure[i],
        "mass" => frame.mass[i],
        "group" => frame.group[i] as f64,
        "kind" => frame.kind[i] as u32 as f64,
        _ => return None,
    })
}

/// Five-stop perceptual ramp, dark blue to yellow.
const RAMP: [(f64, f64, f64); 5] = [
    (68.0, 1.0, 84.0),
    (59.0, 82.0, 139.0),
    (33.0, 145.0, 140.0),
    (94.0, 201.0, 98.0),
    (253.0, 231.0, 37.0),
];

pub fn color_at(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (RAMP.len() - 1) as f64;
    let k = (x.floor() as usize).min(RAMP.len() - 2);
    let f = x - k as f64;
    let (a, b) = (RAMP[k], RAMP[k + 1]);
    let c = |u: f64, v: f64| (u + (v - u) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", c(a.0, b.0), c(a.1, b.1), c(a.2, b.2))
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

/// Scatter projection of a frame with a linear colour map, legend and axis
/// labels in metres. Identical inputs give identical bytes.
pub fn render_snapshot(frame: &ParticleFrame, view: &ViewSpec) -> Result<String, RenderError> {
    let (ha, va) = view.axes;
    if ha > 2 || va > 2 || ha == va {
        return Err(RenderError::BadAxes);
    }
    if !FIELDS.contains(&view.color_by.as_str()) {
        return Err(RenderError::UnknownField(view.color_by.clone()));
    }
    let sel: Vec<usize> = (0..frame.len())
        .filter(|&i| view.include_boundaries || frame.kind[i] != ParticleKind::Boundary)
        .filter(|&i| match view.slice {
            Some((axis, value, band)) => (frame.position[i][axis] - value).abs() <= band,
            None => true,
        })
        .collect();
    let values: Vec<f64> = sel.iter().map(|&i| field_value(frame, &view.color_by, i).unwrap_or(0.0)).collect();
    let (vmin, vmax) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (vmin, vmax) = if sel.is_empty() { (0.0, 0.0) } else { (vmin, vmax) };

    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for &i in &sel {
        let p = frame.position[i];
        for (k, a) in [ha, va].into_iter().enumerate() {
            lo[k] = lo[k].min(p[a]);
            hi[k] = hi[k].max(p[a]);
        }
    }
    for k in 0..2 {
        if !lo[k].is_finite() {
            lo[k] = 0.0;
            hi[k] = 1.0;
        }
        if hi[k] - lo[k] < 1e-9 {
            hi[k] = lo[k] + 1.0;
        }
    }
    let (w, h) = (view.width_px as f64, view.height_px as f64);
    let (ml, mr, mt, mb) = (70.0, 110.0, 40.0, 50.0);
    let pw = w - ml - mr;
    let ph = h - mt - mb;
    // Equal scaling on both axes so shapes are not distorted.
    let scale = (pw / (hi[0] - lo[0])).min(ph / (hi[1] - lo[1]));
    let px = |x: f64| ml + (x - lo[0]) * scale;
    let py = |y: f64| mt + ph - (y - lo[1]) * scale;
    let radius = 2.0;
    let names = ["x", "y", "z"];

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" font-family=\"sans-serif\" font-size=\"12\">",
        view.width_px, view.height_px, view.width_px, view.height_px
    );
    let _ = writeln!(s, "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>", view.width_px, view.height_px);
    if !view.title.is_empty() {
        let _ = writeln!(s, "<text x=\"{}\" y=\"20\">{}</text>", ml, xml_escape(&view.title));
    }
    let _ = writeln!(
        s,
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        fmt_num(ml),
        fmt_num(mt),
        fmt_num(pw),
        fmt_num(ph)
    );
    for k in 0..=4 {
        let fx = lo[0] + (pw / scale) * k as f64 / 4.0;
        let x = px(fx);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", fmt_num(x), fmt_num(mt + ph + 16.0), fmt_num(fx));
        let fy = lo[1] + (ph / scale) * k as f64 / 4.0;
        let y = py(fy);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>", fmt_num(ml - 6.0), fmt_num(y + 4.0), fmt_num(fy));
    }
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{} (m)</text>", fmt_num(ml + pw / 2.0), fmt_num(h - 12.0), names[ha]);
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{} (m)</text>",
        fmt_num(mt + ph / 2.0),
        fmt_num(mt + ph / 2.0),
        names[va]
    );
    let span = vmax - vmin;
    let _ = writeln!(s, "<g stroke=\"none\">");
    for (k, &i) in sel.iter().enumerate() {
        let t = if span > 0.0 { (values[k] - vmin) / span } else { 0.5 };
        let p = frame.position[i];
        let _ = writeln!(s, "<circle cx=\"{}\" cy=\"{}\" r=\"{radius}\" fill=\"{}\"/>", fmt_num(px(p[ha])), fmt_num(py(p[va])), color_at(t));
    }
    let _ = writeln!(s, "</g>");
    // Legend bar.
    let lx = w - mr + 30.0;
    let steps = 20;
    let bar = ph / steps as f64;
    for k in 0..steps {
        let t = 1.0 - (k as f64 + 0.5) / steps as f64;
        let _ = writeln!(
            s,
            "<rect x=\"{}\" y=\"{}\" width=\"16\" height=\"{}\" fill=\"{}\"/>",
            fmt_num(lx),
            fmt_num(mt + k as f64 * bar),
            fmt_num(bar + 0.5),
            color_at(t)
        );
    }
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\">{}</text>", fmt_num(lx), fmt_num(mt - 6.0), xml_escape(&view.color_by));
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\">{}</text>", fmt_num(lx + 20.0), fmt_num(mt + 10.0), fmt_num(vmax));
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\">{}</text>", fmt_num(lx + 20.0), fmt_num(mt + ph), fmt_num(vmin));
    let _ = writeln!(s, "</svg>");
    Ok(s)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
