//! Minimal SVG line plots: stacked panels of polylines with a frame, axis
//! labels and a legend.

use std::fmt::Write;

use crate::harness::sim::ClosedLoopTrace;
use crate::linalg::norm2;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const MAX_POINTS: usize = 1500;

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Draw as a right-continuous step function.
    pub step: bool,
}

#[derive(Clone, Debug)]
pub struct Panel {
    pub title: String,
    pub series: Vec<Series>,
}

fn thin(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    if points.len() <= MAX_POINTS {
        return points.to_vec();
    }
    let stride = points.len().div_ceil(MAX_POINTS);
    let mut out: Vec<(f64, f64)> = points.iter().step_by(stride).copied().collect();
    if out.last() != points.last() {
        out.push(*points.last().expect("non-empty"));
    }
    out
}

fn bounds(panel: &Panel) -> Option<(f64, f64, f64, f64)> {
    let mut it = panel.series.iter().flat_map(|s| s.points.iter());
    let &(x, y) = it.next()?;
    let (mut x0, mut x1, mut y0, mut y1) = (x, x, y, y);
    for &(x, y) in it {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = 0.05 * (y1 - y0);
    Some((x0, x1, y0 - pad, y1 + pad))
}

pub fn render(panels: &[Panel], width: u32, panel_height: u32) -> String {
    let (left, right, top, bottom) = (70.0, 20.0, 28.0, 30.0);
    let w = width as f64;
    let ph = panel_height as f64;
    let height = ph * panels.len() as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (p, panel) in panels.iter().enumerate() {
        let oy = p as f64 * ph;
        let (px0, px1, py0, py1) = (left, w - right, oy + top, oy + ph - bottom);
        let _ = writeln!(
            s,
            r#"<rect x="{px0:.1}" y="{py0:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
            px1 - px0,
            py1 - py0
        );
        let _ = writeln!(s, r#"<text x="{px0:.1}" y="{:.1}">{}</text>"#, py0 - 8.0, escape(&panel.title));
        let Some((x0, x1, y0, y1)) = bounds(panel) else { continue };
        let sx = |x: f64| px0 + (x - x0) / (x1 - x0) * (px1 - px0);
        let sy = |y: f64| py1 - (y - y0) / (y1 - y0) * (py1 - py0);
        for (v, anchor_y) in [(y0, py1), (y1, py0)] {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                px0 - 4.0,
                anchor_y + 4.0,
                tick_label(v)
            );
        }
        if y0 < 0.0 && y1 > 0.0 {
            let _ = writeln!(
                s,
                r##"<line x1="{px0:.1}" y1="{0:.1}" x2="{px1:.1}" y2="{0:.1}" stroke="#bbbbbb" stroke-dasharray="3,3"/>"##,
                sy(0.0)
            );
        }
        for (v, anchor) in [(x0, "start"), (x1, "end")] {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="{anchor}">{}</text>"#,
                sx(v),
                py1 + 14.0,
                tick_label(v)
            );
        }
        for (i, series) in panel.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts = thin(&series.points);
            let mut path = String::new();
            let mut prev_y: Option<f64> = None;
            for &(x, y) in &pts {
                if series.step {
                    if let Some(py) = prev_y {
                        let _ = write!(path, "{:.2},{:.2} ", sx(x), sy(py));
                    }
                }
                let _ = write!(path, "{:.2},{:.2} ", sx(x), sy(y));
                prev_y = Some(y);
            }
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
                path.trim_end()
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" fill="{color}" text-anchor="end">{}</text>"#,
                px1 - 6.0,
                py0 + 14.0 + 13.0 * i as f64,
                escape(&series.label)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn tick_label(v: f64) -> String {
    if v == 0.0 || (1e-2..1e4).contains(&v.abs()) {
        format!("{v:.2}")
    } else {
        format!("{v:.1e}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Three panels: state components with `|x|` and `r_k`, inputs, and the true
/// and held modes.
pub fn trace_svg(trace: &ClosedLoopTrace) -> String {
    let t = |tick: u64| tick as f64 * trace.tick_seconds;
    let mut state: Vec<Series> = (0..trace.state_dim)
        .map(|i| Series {
            label: format!("x{}", i + 1),
            points: trace.rows.iter().map(|r| (t(r.tick), r.x[i])).collect(),
            step: false,
        })
        .collect();
    state.push(Series {
        label: "|x|".into(),
        points: trace.rows.iter().map(|r| (t(r.tick), norm2(&r.x))).collect(),
        step: false,
    });
    state.push(Series {
        label: "r_k".into(),
        points: trace.blocks.iter().map(|b| (t(b.tick), b.radius)).collect(),
        step: true,
    });
    let inputs = (0..trace.input_dim)
        .map(|i| Series {
            label: format!("u{}", i + 1),
            points: trace.rows.iter().map(|r| (t(r.tick), r.u[i])).collect(),
            step: false,
        })
        .collect();
    let modes = vec![
        Series {
            label: "sigma".into(),
            points: trace.rows.iter().map(|r| (t(r.tick), r.sigma as f64)).collect(),
            step: true,
        },
        Series {
            label: "sigma_hat".into(),
            points: trace.rows.iter().map(|r| (t(r.tick), r.sigma_hat as f64)).collect(),
            step: true,
        },
    ];
    render(
        &[
            Panel { title: "state".into(), series: state },
            Panel { title: "input".into(), series: inputs },
            Panel { title: "mode".into(), series: modes },
        ],
        900,
        220,
    )
}
