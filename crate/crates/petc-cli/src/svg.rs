//! Minimal SVG line-plot renderer for trajectory previews. Never required
//! by any pipeline; only emitted on request.

use std::fs;
use std::path::Path;

const COLORS: &[&str] = &[
    "#c0392b", "#2980b9", "#27ae60", "#8e44ad", "#d35400", "#16a085",
];

pub struct Series<'a> {
    pub label: &'a str,
    pub xs: &'a [f64],
    pub ys: Vec<f64>,
}

pub fn write_line_plot(path: &Path, title: &str, series: &[Series]) -> std::io::Result<()> {
    let (w, h) = (860.0, 420.0);
    let (ml, mr, mt, mb) = (60.0, 20.0, 40.0, 40.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for &x in s.xs {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
        }
        for &y in &s.ys {
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !(x_min.is_finite() && y_min.is_finite()) || x_max <= x_min {
        return Ok(());
    }
    if y_max - y_min < 1e-12 {
        y_max += 1.0;
        y_min -= 1.0;
    }
    let pad = 0.05 * (y_max - y_min);
    y_max += pad;
    y_min -= pad;
    let sx = |x: f64| ml + (x - x_min) / (x_max - x_min) * pw;
    let sy = |y: f64| mt + (y_max - y) / (y_max - y_min) * ph;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">{title}</text>\n",
        ml
    ));
    // axes
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333\"/>\n\
         <line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"#333\"/>\n",
        h - mb,
        w - mr,
        h - mb,
        h - mb
    ));
    // zero line when visible
    if y_min < 0.0 && y_max > 0.0 {
        svg.push_str(&format!(
            "<line x1=\"{ml}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"#bbb\" \
             stroke-dasharray=\"4 4\"/>\n",
            sy(0.0),
            w - mr
        ));
    }
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::from("M");
        for (k, (&x, &y)) in s.xs.iter().zip(&s.ys).enumerate() {
            if k > 0 {
                d.push('L');
            }
            d.push_str(&format!("{:.2} {:.2}", sx(x), sy(y)));
        }
        svg.push_str(&format!(
            "<path d=\"{d}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
             fill=\"{color}\">{}</text>\n",
            w - mr - 120.0,
            mt + 16.0 * (i as f64 + 1.0),
            s.label
        ));
    }
    // axis extremes
    svg.push_str(&format!(
        "<text x=\"{ml}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{x_min:.2}</text>\n\
         <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{x_max:.2}</text>\n\
         <text x=\"8\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{y_max:.2}</text>\n\
         <text x=\"8\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{y_min:.2}</text>\n",
        h - mb + 16.0,
        w - mr - 30.0,
        h - mb + 16.0,
        mt + 4.0,
        h - mb
    ));
    svg.push_str("</svg>\n");
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, svg)
}
