//! Time-sliced transition amplitudes.
//!
//! A slice of duration `eps` connects `q` to `q'` through the short-time
//! action `S_eps(q', q) = m (q'-q)^2 / 2 eps - eps V((q+q')/2)`. On the grid
//! the slice becomes a matrix whose entries carry the quadrature weight
//! `dq`, so composing slices is a plain matrix product.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{PhysicalParams, Potential, SpatialGrid, WaveField};

/// `m (q'-q)^2 / 2 eps - eps V((q+q')/2)`
pub fn short_time_action(q: f64, q_final: f64, epsilon: f64, pot: &Potential, params: &PhysicalParams) -> f64 {
    let dx = q_final - q;
    params.mass * dx * dx / (2.0 * epsilon) - epsilon * pot.value_at(0.5 * (q + q_final))
}

/// Momentum transition amplitudes `(p_eps, p'_eps) = (-dS/dq, dS/dq')`,
/// differentiated analytically. The potential slope enters through the
/// midpoint with weight one half.
pub fn momentum_tas(q: f64, q_final: f64, epsilon: f64, pot: &Potential, params: &PhysicalParams) -> (f64, f64) {
    let kinetic = params.mass * (q_final - q) / epsilon;
    // d/dq [-eps V(mid)] = eps F(mid)/2, likewise for q'
    let pot_term = 0.5 * epsilon * pot.force_at(0.5 * (q + q_final));
    (kinetic - pot_term, kinetic + pot_term)
}

/// One-sided slopes at the midpoint of a slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MidpointSample {
    pub q: f64,
    pub q_final: f64,
    pub midpoint: f64,
    pub epsilon: f64,
    /// `m (Q - q) / eps`
    pub p_backward: f64,
    /// `m (q' - Q) / eps`
    pub p_forward: f64,
    /// `(p_backward + p_forward) / 2`
    pub current_momentum: f64,
    /// `p_forward - p_backward`, the bracket as it is usually displayed.
    /// Identically zero at the midpoint.
    pub slope_difference: f64,
    /// `p_forward + p_backward`, equal to `p_eps` for the free kernel.
    pub slope_sum: f64,
}

pub fn midpoint_momentum(q: f64, q_final: f64, epsilon: f64, params: &PhysicalParams) -> MidpointSample {
    let midpoint = 0.5 * (q + q_final);
    let p_backward = params.mass * (midpoint - q) / epsilon;
    let p_forward = params.mass * (q_final - midpoint) / epsilon;
    MidpointSample {
        q,
        q_final,
        midpoint,
        epsilon,
        p_backward,
        p_forward,
        current_momentum: 0.5 * (p_backward + p_forward),
        slope_difference: p_forward - p_backward,
        slope_sum: p_forward + p_backward,
    }
}

/// How the oscillatory tail of a slice kernel is cut off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelWindow {
    /// Keep every entry. Only sound when the chirp is resolved across the
    /// whole domain, `m L dq / (hbar eps) < pi`.
    Full,
    /// Zero entries with `|q'-q| > width_factor * sqrt(hbar eps / m)`.
    Band { width_factor: f64 },
    /// Smooth taper in `|q'-q|`, flat up to `start` and zero from `end`,
    /// both given as fractions of the aliasing distance
    /// `pi hbar eps / (m dq)` beyond which the sampled chirp oscillates
    /// faster than the grid can represent.
    Tapered { start: f64, end: f64 },
}

impl Default for KernelWindow {
    fn default() -> Self {
        KernelWindow::Tapered { start: 0.35, end: 0.9 }
    }
}

/// `C^inf` step from 1 at `t <= 0` to 0 at `t >= 1`.
fn smooth_step_down(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t >= 1.0 {
        return 0.0;
    }
    let f = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    f(1.0 - t) / (f(1.0 - t) + f(t))
}

impl KernelWindow {
    fn weight(&self, distance: f64, epsilon: f64, dq: f64, params: &PhysicalParams) -> f64 {
        match *self {
            KernelWindow::Full => 1.0,
            KernelWindow::Band { width_factor } => {
                if distance <= width_factor * (params.hbar * epsilon / params.mass).sqrt() {
                    1.0
                } else {
                    0.0
                }
            }
            KernelWindow::Tapered { start, end } => {
                let alias = PI * params.hbar * epsilon / (params.mass * dq);
                smooth_step_down((distance - start * alias) / ((end - start) * alias))
            }
        }
    }
}

/// Discretized `<q_j|q_k>_eps dq`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub grid: SpatialGrid,
    /// Total duration spanned (the sum of slice durations after composition).
    pub epsilon: f64,
    pub values: Array2<Complex64>,
}

/// `sqrt(m / (2 pi i hbar eps))` on the branch `sqrt(i) = exp(i pi/4)`.
pub fn kernel_normalization(epsilon: f64, params: &PhysicalParams) -> Complex64 {
    (params.mass / (2.0 * PI * params.hbar * epsilon)).sqrt() * Complex64::from_polar(1.0, -PI / 4.0)
}

/// Kernel resolution on the grid: `sqrt(hbar eps / m)` against `dq`.
pub fn kernel_width(epsilon: f64, params: &PhysicalParams) -> f64 {
    (params.hbar * epsilon / params.mass).sqrt()
}

/// Entries `N(eps) exp(i S_eps(q_j, q_k)/hbar) dq`, times the window.
pub fn build_kernel(
    grid: &SpatialGrid,
    epsilon: f64,
    pot: &Potential,
    params: &PhysicalParams,
    window: KernelWindow,
) -> Result<KernelMatrix> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidParameter {
            name: "epsilon",
            reason: format!("must be positive, got {epsilon}"),
        });
    }
    if !pot.grid().matches(grid) {
        return Err(Error::GridMismatch);
    }
    let dq = grid.dq();
    let width = kernel_width(epsilon, params);
    if width < 0.5 * dq {
        return Err(Error::UnresolvableKernel { width, half_dq: 0.5 * dq });
    }
    let n = grid.n_points();
    let norm = kernel_normalization(epsilon, params) * dq;
    let q = grid.points();
    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            (0..n)
                .map(|k| {
                    let w = window.weight((q[j] - q[k]).abs(), epsilon, dq, params);
                    if w == 0.0 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        let s = short_time_action(q[k], q[j], epsilon, pot, params);
                        norm * w * Complex64::from_polar(1.0, s / params.hbar)
                    }
                })
                .collect()
        })
        .collect();
    let values = Array2::from_shape_vec((n, n), rows.into_iter().flatten().collect()).expect("n x n");
    Ok(KernelMatrix {
        grid: *grid,
        epsilon,
        values,
    })
}

impl KernelMatrix {
    pub fn apply(&self, psi: &WaveField) -> Result<WaveField> {
        if !self.grid.matches(psi.grid()) {
            return Err(Error::GridMismatch);
        }
        let v = Array1::from(psi.values().to_vec());
        let out: Vec<Complex64> = (0..self.values.nrows())
            .into_par_iter()
            .map(|j| self.values.row(j).iter().zip(v.iter()).map(|(a, b)| a * b).sum())
            .collect();
        WaveField::new(self.grid, psi.time() + self.epsilon, out)
    }

    /// Largest `|(K^dagger K - I)_{jk}|`, a measure of how far the slice
    /// is from unitary on the grid.
    pub fn unitarity_defect(&self) -> f64 {
        let kh = self.values.t().mapv(|z| z.conj());
        let prod = kh.dot(&self.values);
        prod.indexed_iter()
            .map(|((j, k), s)| (s - if j == k { 1.0 } else { 0.0 }).norm())
            .fold(0.0, f64::max)
    }

    /// `| |K psi|^2 - |psi|^2 |` for one state, the cheap counterpart of
    /// `unitarity_defect`.
    pub fn norm_defect(&self, psi: &WaveField) -> Result<f64> {
        Ok((self.apply(psi)?.norm_squared() - psi.norm_squared()).abs())
    }
}

/// Applies slices in time order: `kernels[0]` acts first.
pub fn apply_chain(kernels: &[KernelMatrix], psi: &WaveField) -> Result<WaveField> {
    let mut out = psi.clone();
    for k in kernels {
        out = k.apply(&out)?;
    }
    Ok(out)
}

/// Applies one slice `n` times, returning every intermediate state.
pub fn apply_repeated(kernel: &KernelMatrix, psi: &WaveField, n: usize) -> Result<Vec<WaveField>> {
    let mut states = Vec::with_capacity(n + 1);
    states.push(psi.clone());
    for _ in 0..n {
        let next = kernel.apply(states.last().unwrap())?;
        states.push(next);
    }
    Ok(states)
}

/// Matrix product of slices in time order, `K_n ... K_2 K_1`. Each
/// product sums over the intermediate grid point, the quadrature weight
/// already being folded into the entries.
pub fn compose_chain(kernels: &[KernelMatrix]) -> Result<KernelMatrix> {
    let first = kernels.first().ok_or(Error::NotEnoughInputs { needed: 1, got: 0 })?;
    let mut acc = first.clone();
    for k in &kernels[1..] {
        if !k.grid.matches(&acc.grid) {
            return Err(Error::GridMismatch);
        }
        acc = KernelMatrix {
            grid: acc.grid,
            epsilon: acc.epsilon + k.epsilon,
            values: matmul(&k.values, &acc.values),
        };
    }
    Ok(acc)
}

fn matmul(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Array2<Complex64> {
    a.dot(b)
}

/// Exact free propagator over a finite time, `N(t) exp(i m (q'-q)^2 / 2 hbar t) dq`,
/// with no window. Resolvable on the grid for the times of interest here.
pub fn exact_free_kernel(grid: &SpatialGrid, t: f64, params: &PhysicalParams) -> Result<KernelMatrix> {
    build_kernel(grid, t, &Potential::free(grid), params, KernelWindow::Full)
}
