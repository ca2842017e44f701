//! Trajectory plots: time runs left to right, position bottom to top, over
//! a grayscale density backdrop (darker is denser).

use std::fmt::Write;

use diracbohm::bohm::TrajectorySet;
use diracbohm::WaveField;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN: f64 = 60.0;
const MAX_CELLS: usize = 200;

struct Frame {
    t0: f64,
    t1: f64,
    q0: f64,
    q1: f64,
}

impl Frame {
    fn x(&self, t: f64) -> f64 {
        let span = (self.t1 - self.t0).max(f64::MIN_POSITIVE);
        MARGIN + (t - self.t0) / span * (WIDTH - 2.0 * MARGIN)
    }

    fn y(&self, q: f64) -> f64 {
        let span = (self.q1 - self.q0).max(f64::MIN_POSITIVE);
        HEIGHT - MARGIN - (q - self.q0) / span * (HEIGHT - 2.0 * MARGIN)
    }
}

fn frame(traj: &TrajectorySet, background: &[WaveField]) -> Frame {
    let times = background.iter().map(|s| s.time()).chain(traj.times.iter().copied());
    let (t0, t1) = times.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), t| (a.min(t), b.max(t)));
    let (q0, q1) = match background.first() {
        Some(s) => (s.grid().q_min(), s.grid().q_max()),
        None => traj
            .positions
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &q| (a.min(q), b.max(q))),
    };
    let finite_or = |v: f64, d: f64| if v.is_finite() { v } else { d };
    Frame {
        t0: finite_or(t0, 0.0),
        t1: finite_or(t1, 1.0),
        q0: finite_or(q0, 0.0),
        q1: finite_or(q1, 1.0),
    }
}

fn backdrop(out: &mut String, f: &Frame, background: &[WaveField]) {
    if background.is_empty() {
        return;
    }
    let n_t = background.len().min(MAX_CELLS);
    let n_q = background[0].grid().n_points();
    let rows = n_q.min(MAX_CELLS);
    let cols: Vec<Vec<f64>> = (0..n_t)
        .map(|c| {
            let s = &background[c * background.len() / n_t];
            let rho = s.density();
            (0..rows)
                .map(|r| {
                    let (a, b) = (r * n_q / rows, (r + 1) * n_q / rows);
                    rho[a..b].iter().sum::<f64>() / (b - a) as f64
                })
                .collect()
        })
        .collect();
    let peak = cols.iter().flatten().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return;
    }
    let dt_cell = (f.x(f.t1) - f.x(f.t0)) / n_t as f64;
    let dq_cell = (f.y(f.q0) - f.y(f.q1)) / rows as f64;
    for (c, col) in cols.iter().enumerate() {
        for (r, rho) in col.iter().enumerate() {
            let shade = (255.0 * (1.0 - (rho / peak).sqrt())).round() as u8;
            if shade == 255 {
                continue;
            }
            let x = f.x(f.t0) + c as f64 * dt_cell;
            let y = f.y(f.q0) - (r + 1) as f64 * dq_cell;
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="rgb({shade},{shade},{shade})"/>"#,
                dt_cell + 0.05,
                dq_cell + 0.05
            );
        }
    }
}

fn axes(out: &mut String, f: &Frame) {
    let (x0, x1, y0, y1) = (f.x(f.t0), f.x(f.t1), f.y(f.q0), f.y(f.q1));
    let _ = writeln!(
        out,
        r#"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    let label = |out: &mut String, x: f64, y: f64, anchor: &str, text: String| {
        let _ = writeln!(out, r#"<text x="{x:.2}" y="{y:.2}" font-size="12" text-anchor="{anchor}">{text}</text>"#);
    };
    label(out, x0, y0 + 18.0, "start", format!("t = {}", f.t0));
    label(out, x1, y0 + 18.0, "end", format!("t = {}", f.t1));
    label(out, (x0 + x1) / 2.0, y0 + 36.0, "middle", "time".into());
    label(out, x0 - 6.0, y0, "end", format!("{}", f.q0));
    label(out, x0 - 6.0, y1 + 12.0, "end", format!("{}", f.q1));
    label(out, x0 - 30.0, (y0 + y1) / 2.0, "middle", "q".into());
}

/// Deterministic SVG of trajectories over the density of `background`.
pub fn emit_svg_trajectories(traj: &TrajectorySet, background: &[WaveField]) -> String {
    let f = frame(traj, background);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    backdrop(&mut out, &f, background);
    for i in 0..traj.n_trajectories() {
        let pts: Vec<String> = traj
            .times
            .iter()
            .zip(traj.positions.row(i))
            .map(|(&t, &q)| format!("{:.2},{:.2}", f.x(t), f.y(q)))
            .collect();
        let _ = writeln!(
            out,
            r##"<polyline points="{}" fill="none" stroke="#c03020" stroke-width="0.8"/>"##,
            pts.join(" ")
        );
    }
    axes(&mut out, &f);
    out.push_str("</svg>\n");
    out
}
