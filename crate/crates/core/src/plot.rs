//! Static SVG rendering of population trajectories: three stacked panels,
//! one per monomer, with the eight site populations of that monomer drawn
//! against time. Pure string assembly — the output is a self-contained file.

use std::fmt::Write as _;

use crate::model::{site_index, site_label, Monomer, N_PER_MONOMER};
use crate::propagator::Trajectory;
use crate::Real;

const WIDTH: f64 = 880.0;
const PANEL_LEFT: f64 = 64.0;
const PANEL_RIGHT: f64 = 760.0;
const PANEL_HEIGHT: f64 = 190.0;
const PANEL_GAP: f64 = 46.0;
const TOP: f64 = 40.0;

/// Colorblind-safe palette, one entry per BChl within a monomer.
const PALETTE: [&str; N_PER_MONOMER] = [
    "#0072b2", "#d55e00", "#009e73", "#cc79a7", "#e69f00", "#56b4e9", "#8a2be2", "#000000",
];

/// Cap on polyline vertices per curve; denser trajectories are strided.
const MAX_POINTS: usize = 1200;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Round a positive value up to a tidy axis limit (1, 2 or 5 times a power
/// of ten).
fn nice_ceiling(x: f64) -> f64 {
    if !(x > 0.0) {
        return 1.0;
    }
    let power = 10f64.powf(x.log10().floor());
    for m in [1.0, 2.0, 5.0, 10.0] {
        if m * power >= x * (1.0 - 1e-12) {
            return m * power;
        }
    }
    10.0 * power
}

fn fmt_tick(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let s = format!("{x:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Render a trajectory as a static SVG document with one panel per monomer.
pub fn populations_svg<T: Real>(traj: &Trajectory<T>, title: &str) -> String {
    let n = traj.times_ps.len();
    let t_end = traj
        .times_ps
        .last()
        .map(|&t| t.to_f64().unwrap_or(1.0))
        .unwrap_or(1.0)
        .max(1e-12);
    let stride = n.div_ceil(MAX_POINTS).max(1);

    let total_height = TOP + 3.0 * (PANEL_HEIGHT + PANEL_GAP) + 8.0;
    let mut svg = String::with_capacity(1 << 16);
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{total_height}\" \
         viewBox=\"0 0 {WIDTH} {total_height}\" font-family=\"sans-serif\">\n"
    );
    let _ = writeln!(
        svg,
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{total_height}\" fill=\"#ffffff\"/>"
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"24\" font-size=\"15\" fill=\"#111111\">{}</text>",
        PANEL_LEFT,
        esc(title)
    );

    for (p, monomer) in Monomer::ALL.into_iter().enumerate() {
        let y0 = TOP + p as f64 * (PANEL_HEIGHT + PANEL_GAP);
        let y1 = y0 + PANEL_HEIGHT;

        // Per-panel vertical scale.
        let mut peak = 0.0f64;
        for sample in &traj.populations {
            for b in 1..=N_PER_MONOMER {
                let v = sample[site_index(monomer, b)].to_f64().unwrap_or(0.0);
                if v > peak {
                    peak = v;
                }
            }
        }
        let y_max = nice_ceiling(peak);

        let x_of = |t: f64| PANEL_LEFT + (PANEL_RIGHT - PANEL_LEFT) * (t / t_end);
        let y_of = |v: f64| y1 - PANEL_HEIGHT * (v / y_max).clamp(0.0, 1.0);

        let _ = writeln!(svg, "<g class=\"panel\" data-monomer=\"{}\">", monomer.label());
        let _ = writeln!(
            svg,
            "<rect x=\"{PANEL_LEFT}\" y=\"{y0}\" width=\"{}\" height=\"{PANEL_HEIGHT}\" \
             fill=\"none\" stroke=\"#444444\"/>",
            PANEL_RIGHT - PANEL_LEFT
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"13\" fill=\"#111111\">monomer {}</text>",
            PANEL_LEFT + 6.0,
            y0 + 16.0,
            monomer.label()
        );

        // Axis ticks: four divisions horizontally, two vertically.
        for k in 0..=4 {
            let t = t_end * k as f64 / 4.0;
            let x = x_of(t);
            let _ = writeln!(
                svg,
                "<line x1=\"{x:.2}\" y1=\"{y1}\" x2=\"{x:.2}\" y2=\"{}\" stroke=\"#444444\"/>",
                y1 + 4.0
            );
            let _ = writeln!(
                svg,
                "<text x=\"{x:.2}\" y=\"{}\" font-size=\"11\" fill=\"#111111\" \
                 text-anchor=\"middle\">{}</text>",
                y1 + 16.0,
                fmt_tick(t)
            );
        }
        for k in 0..=2 {
            let v = y_max * k as f64 / 2.0;
            let y = y_of(v);
            let _ = writeln!(
                svg,
                "<line x1=\"{}\" y1=\"{y:.2}\" x2=\"{PANEL_LEFT}\" y2=\"{y:.2}\" stroke=\"#444444\"/>",
                PANEL_LEFT - 4.0
            );
            let _ = writeln!(
                svg,
                "<text x=\"{}\" y=\"{:.2}\" font-size=\"11\" fill=\"#111111\" \
                 text-anchor=\"end\">{}</text>",
                PANEL_LEFT - 7.0,
                y + 4.0,
                fmt_tick(v)
            );
        }
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"#111111\" text-anchor=\"middle\">t (ps)</text>",
            (PANEL_LEFT + PANEL_RIGHT) / 2.0,
            y1 + 32.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"16\" y=\"{:.2}\" font-size=\"11\" fill=\"#111111\" \
             transform=\"rotate(-90 16 {:.2})\" text-anchor=\"middle\">population</text>",
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0
        );

        // One polyline per BChl, plus its legend swatch.
        for b in 1..=N_PER_MONOMER {
            let site = site_index(monomer, b);
            let color = PALETTE[b - 1];
            let mut points = String::new();
            let mut i = 0;
            while i < n {
                let t = traj.times_ps[i].to_f64().unwrap_or(0.0);
                let v = traj.populations[i][site].to_f64().unwrap_or(0.0);
                let _ = write!(points, "{:.2},{:.2} ", x_of(t), y_of(v));
                if i + stride >= n && i != n - 1 {
                    i = n - 1; // always include the final sample
                } else {
                    i += stride;
                }
            }
            let _ = writeln!(
                svg,
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.4\" points=\"{}\"/>",
                points.trim_end()
            );

            let ly = y0 + 12.0 + (b - 1) as f64 * 20.0;
            let _ = writeln!(
                svg,
                "<line x1=\"{}\" y1=\"{ly:.2}\" x2=\"{}\" y2=\"{ly:.2}\" stroke=\"{color}\" \
                 stroke-width=\"3\"/>",
                PANEL_RIGHT + 12.0,
                PANEL_RIGHT + 34.0
            );
            let _ = writeln!(
                svg,
                "<text x=\"{}\" y=\"{:.2}\" font-size=\"11\" fill=\"#111111\">{}</text>",
                PANEL_RIGHT + 40.0,
                ly + 4.0,
                site_label(site)
            );
        }
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    svg
}
