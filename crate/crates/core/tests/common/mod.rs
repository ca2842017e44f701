//! Closed-form reference solutions used as oracles.
#![allow(dead_code)]

use std::f64::consts::PI;

use diracbohm::{Complex64, PhysicalParams, SpatialGrid, WaveField};

/// Free Gaussian of initial width `sigma` (in `|psi|^2 ~ exp(-x^2/2 sigma^2)`)
/// at time `t`.
pub fn dispersing_gaussian(grid: &SpatialGrid, params: &PhysicalParams, center: f64, sigma: f64, p0: f64, t: f64) -> WaveField {
    let (hbar, m) = (params.hbar, params.mass);
    let spread = Complex64::new(1.0, hbar * t / (2.0 * m * sigma * sigma));
    let pre = (2.0 * PI * sigma * sigma).powf(-0.25) / spread.sqrt();
    let values = grid
        .points()
        .into_iter()
        .map(|q| {
            let x = q - center - p0 * t / m;
            let arg = -x * x / (4.0 * sigma * sigma) / spread
                + Complex64::i() * (p0 * q / hbar - p0 * p0 * t / (2.0 * m * hbar));
            pre * arg.exp()
        })
        .collect();
    WaveField::new(*grid, t, values).unwrap()
}

/// Coherent state of the oscillator `V = m omega^2 q^2 / 2`, released from
/// rest at `q = displacement`.
pub fn coherent_state(grid: &SpatialGrid, params: &PhysicalParams, omega: f64, displacement: f64, t: f64) -> WaveField {
    let (hbar, m) = (params.hbar, params.mass);
    let (s, c) = (omega * t).sin_cos();
    let qc = displacement * c;
    let pc = -m * omega * displacement * s;
    let pre = (m * omega / (PI * hbar)).powf(0.25);
    let values = grid
        .points()
        .into_iter()
        .map(|q| {
            let re = -m * omega * (q - qc).powi(2) / (2.0 * hbar);
            let im = pc * q / hbar - 0.5 * omega * t - pc * qc / (2.0 * hbar);
            pre * Complex64::new(re, im).exp()
        })
        .collect();
    WaveField::new(*grid, t, values).unwrap()
}

/// `<q'| exp(-iHt/hbar) |q>` for the free particle.
pub fn free_kernel(q_final: f64, q: f64, t: f64, params: &PhysicalParams) -> Complex64 {
    let (hbar, m) = (params.hbar, params.mass);
    let norm = Complex64::new(0.0, 2.0 * PI * hbar * t / m).sqrt().inv();
    norm * Complex64::new(0.0, m * (q_final - q).powi(2) / (2.0 * hbar * t)).exp()
}

/// Mehler form of the oscillator kernel, valid for `sin(omega t) > 0`.
pub fn mehler_kernel(q_final: f64, q: f64, t: f64, omega: f64, params: &PhysicalParams) -> Complex64 {
    let (hbar, m) = (params.hbar, params.mass);
    let (s, c) = (omega * t).sin_cos();
    let norm = Complex64::new(0.0, 2.0 * PI * hbar * s / (m * omega)).sqrt().inv();
    let phase = m * omega / (2.0 * hbar * s) * ((q * q + q_final * q_final) * c - 2.0 * q * q_final);
    norm * Complex64::new(0.0, phase).exp()
}

/// Applies a kernel by trapezoid-free grid quadrature.
pub fn apply_kernel(psi: &WaveField, t: f64, kernel: impl Fn(f64, f64) -> Complex64) -> WaveField {
    let g = psi.grid();
    let q = g.points();
    let values = q
        .iter()
        .map(|&qf| {
            q.iter().zip(psi.values()).map(|(&qi, z)| kernel(qf, qi) * z).sum::<Complex64>() * g.dq()
        })
        .collect();
    WaveField::new(*g, psi.time() + t, values).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64], mask: &[bool]) -> f64 {
    a.iter()
        .zip(b)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((x, y), _)| (x - y).abs())
        .fold(0.0, f64::max)
}
