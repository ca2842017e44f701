//! Time evolution under `H = p^2/2m + V(q)` and expectation values.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{PhysicalParams, Potential, WaveField};
use crate::spectral::Spectral;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Strang splitting with the kinetic step taken in momentum space.
    SplitOperator,
    CrankNicolson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Periodic,
    /// `psi = 0` just outside the grid. Crank-Nicolson only.
    HardWall,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub method: Method,
    pub boundary: Boundary,
    /// Keep every `record_every`-th state (the initial state is always kept).
    pub record_every: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            n_steps: 1000,
            method: Method::SplitOperator,
            boundary: Boundary::Periodic,
            record_every: 1,
        }
    }
}

/// Recorded states and run diagnostics.
#[derive(Debug, Clone)]
pub struct Evolution {
    pub states: Vec<WaveField>,
    /// Largest `|norm(t) - norm(0)|` over every step.
    pub norm_drift: f64,
    /// Largest `|E(t) - E(0)|` over the recorded states.
    pub energy_drift: f64,
    pub warnings: Vec<String>,
}

/// Norm drift beyond which a run is rejected.
pub const UNSTABLE_NORM_DRIFT: f64 = 1e-4;

pub fn evolve(psi: &WaveField, pot: &Potential, cfg: &EvolutionConfig, params: &PhysicalParams) -> Result<Evolution> {
    if !(cfg.dt.is_finite() && cfg.dt > 0.0) {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!("must be positive, got {}", cfg.dt),
        });
    }
    if cfg.record_every == 0 {
        return Err(Error::InvalidParameter {
            name: "record_every",
            reason: "must be at least 1".into(),
        });
    }
    if !pot.grid().matches(psi.grid()) {
        return Err(Error::GridMismatch);
    }
    let mut warnings = Vec::new();
    let guard = cfg.dt * pot.max_abs() / params.hbar;
    if guard >= 0.5 {
        warnings.push(format!("dt*max|V|/hbar = {guard:.3} exceeds 0.5"));
    }

    let mut stepper: Box<dyn FnMut(&mut [Complex64])> = match (cfg.method, cfg.boundary) {
        (Method::SplitOperator, Boundary::Periodic) => Box::new(split_operator_stepper(psi, pot, cfg.dt, params)),
        (Method::SplitOperator, Boundary::HardWall) => {
            return Err(Error::InvalidParameter {
                name: "boundary",
                reason: "hard walls require the Crank-Nicolson method".into(),
            })
        }
        (Method::CrankNicolson, b) => Box::new(crank_nicolson_stepper(psi, pot, cfg.dt, params, b)),
    };

    let dq = psi.grid().dq();
    let norm0 = psi.norm_squared();
    let e0 = energy(psi, pot, params);
    let mut energy_drift: f64 = 0.0;
    let mut norm_drift: f64 = 0.0;
    let mut states = Vec::with_capacity(cfg.n_steps / cfg.record_every + 1);
    states.push(psi.clone());
    let mut values = psi.values().to_vec();
    for step in 1..=cfg.n_steps {
        stepper(&mut values);
        let norm = values.iter().map(|z| z.norm_sqr()).sum::<f64>() * dq;
        let drift = (norm - norm0).abs();
        norm_drift = norm_drift.max(drift);
        if !(drift <= UNSTABLE_NORM_DRIFT) {
            return Err(Error::UnstableStep { step, drift });
        }
        if step % cfg.record_every == 0 {
            let state = WaveField::new(*psi.grid(), psi.time() + step as f64 * cfg.dt, values.clone())?;
            energy_drift = energy_drift.max((energy(&state, pot, params) - e0).abs());
            states.push(state);
        }
    }

    let edge = edge_mass_max(&states);
    if edge > 1e-10 {
        warnings.push(format!("density within the outer 1/16 of the grid reached {edge:.3e}; wrap-around likely"));
    }
    Ok(Evolution {
        states,
        norm_drift,
        energy_drift,
        warnings,
    })
}

fn edge_mass_max(states: &[WaveField]) -> f64 {
    states
        .iter()
        .map(|s| {
            let n = s.grid().n_points();
            let strip = n / 16;
            let v = s.values();
            (v[..strip].iter().chain(&v[n - strip..]).map(|z| z.norm_sqr()).sum::<f64>()) * s.grid().dq()
        })
        .fold(0.0, f64::max)
}

fn split_operator_stepper(psi: &WaveField, pot: &Potential, dt: f64, params: &PhysicalParams) -> impl FnMut(&mut [Complex64]) {
    let spectral = Spectral::new(psi.grid());
    let half_v: Vec<Complex64> = pot
        .values()
        .iter()
        .map(|v| Complex64::from_polar(1.0, -v * dt / (2.0 * params.hbar)))
        .collect();
    let kinetic: Vec<Complex64> = spectral
        .wavenumbers()
        .iter()
        .map(|k| Complex64::from_polar(1.0, -params.hbar * k * k * dt / (2.0 * params.mass)))
        .collect();
    move |values: &mut [Complex64]| {
        for (v, h) in values.iter_mut().zip(&half_v) {
            *v *= h;
        }
        spectral.forward(values);
        for (v, k) in values.iter_mut().zip(&kinetic) {
            *v *= k;
        }
        spectral.inverse(values);
        for (v, h) in values.iter_mut().zip(&half_v) {
            *v *= h;
        }
    }
}

fn crank_nicolson_stepper(
    psi: &WaveField,
    pot: &Potential,
    dt: f64,
    params: &PhysicalParams,
    boundary: Boundary,
) -> impl FnMut(&mut [Complex64]) {
    let n = psi.grid().n_points();
    let dq = psi.grid().dq();
    let kin = params.hbar * params.hbar / (2.0 * params.mass * dq * dq);
    let i_half = Complex64::new(0.0, dt / (2.0 * params.hbar));
    // H is tridiagonal: diag 2*kin + V, off-diagonal -kin.
    let diag_h: Vec<f64> = pot.values().iter().map(|v| 2.0 * kin + v).collect();
    let off = -kin;
    let a_diag: Vec<Complex64> = diag_h.iter().map(|d| 1.0 + i_half * d).collect();
    let a_off = i_half * off;
    let periodic = boundary == Boundary::Periodic;
    let mut rhs = vec![Complex64::new(0.0, 0.0); n];
    move |values: &mut [Complex64]| {
        for j in 0..n {
            let left = if j > 0 {
                values[j - 1]
            } else if periodic {
                values[n - 1]
            } else {
                Complex64::new(0.0, 0.0)
            };
            let right = if j + 1 < n {
                values[j + 1]
            } else if periodic {
                values[0]
            } else {
                Complex64::new(0.0, 0.0)
            };
            rhs[j] = (1.0 - i_half * diag_h[j]) * values[j] - i_half * off * (left + right);
        }
        let sol = if periodic {
            solve_cyclic(&a_diag, a_off, &rhs)
        } else {
            solve_tridiagonal(&a_diag, a_off, &rhs)
        };
        values.copy_from_slice(&sol);
    }
}

/// Thomas algorithm for a symmetric tridiagonal system with constant off-diagonal.
fn solve_tridiagonal(diag: &[Complex64], off: Complex64, rhs: &[Complex64]) -> Vec<Complex64> {
    let n = diag.len();
    let mut c = vec![Complex64::new(0.0, 0.0); n];
    let mut d = vec![Complex64::new(0.0, 0.0); n];
    c[0] = off / diag[0];
    d[0] = rhs[0] / diag[0];
    for j in 1..n {
        let m = diag[j] - off * c[j - 1];
        c[j] = off / m;
        d[j] = (rhs[j] - off * d[j - 1]) / m;
    }
    let mut x = d;
    for j in (0..n - 1).rev() {
        let next = x[j + 1];
        x[j] -= c[j] * next;
    }
    x
}

/// Cyclic tridiagonal solve by the Sherman-Morrison correction.
fn solve_cyclic(diag: &[Complex64], off: Complex64, rhs: &[Complex64]) -> Vec<Complex64> {
    let n = diag.len();
    let gamma = -diag[0];
    let mut modified = diag.to_vec();
    modified[0] -= gamma;
    modified[n - 1] -= off * off / gamma;
    let x = solve_tridiagonal(&modified, off, rhs);
    let mut u = vec![Complex64::new(0.0, 0.0); n];
    u[0] = gamma;
    u[n - 1] = off;
    let z = solve_tridiagonal(&modified, off, &u);
    let fact = (x[0] + off * x[n - 1] / gamma) / (1.0 + z[0] + off * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect()
}

/// `<q> = sum q |psi|^2 dq`
pub fn expectation_q(psi: &WaveField) -> f64 {
    let g = psi.grid();
    psi.values()
        .iter()
        .enumerate()
        .map(|(j, z)| g.point(j) * z.norm_sqr())
        .sum::<f64>()
        * g.dq()
}

/// `<q^2>`
pub fn expectation_q2(psi: &WaveField) -> f64 {
    let g = psi.grid();
    psi.values()
        .iter()
        .enumerate()
        .map(|(j, z)| g.point(j).powi(2) * z.norm_sqr())
        .sum::<f64>()
        * g.dq()
}

/// Position spread `sqrt(<q^2> - <q>^2)`.
pub fn width(psi: &WaveField) -> f64 {
    let m = expectation_q(psi);
    (expectation_q2(psi) - m * m).max(0.0).sqrt()
}

/// `<p>` with `p = -i hbar d/dq` taken spectrally.
pub fn expectation_p(psi: &WaveField, params: &PhysicalParams) -> f64 {
    let sp = Spectral::new(psi.grid());
    let d = sp.derivative(psi.values());
    let s: Complex64 = psi.values().iter().zip(&d).map(|(a, b)| a.conj() * b).sum();
    (Complex64::new(0.0, -params.hbar) * s).re * psi.grid().dq()
}

/// `<H>`: kinetic part from the momentum-space density, potential part pointwise.
pub fn energy(psi: &WaveField, pot: &Potential, params: &PhysicalParams) -> f64 {
    let sp = Spectral::new(psi.grid());
    let mut buf = psi.values().to_vec();
    sp.forward(&mut buf);
    let n = buf.len() as f64;
    // Parseval: sum |psi|^2 dq = sum |F|^2 dq / n
    let kinetic: f64 = buf
        .iter()
        .zip(sp.wavenumbers())
        .map(|(f, k)| f.norm_sqr() * params.hbar * params.hbar * k * k / (2.0 * params.mass))
        .sum::<f64>()
        * psi.grid().dq()
        / n;
    let potential: f64 = psi
        .values()
        .iter()
        .zip(pot.values())
        .map(|(z, v)| z.norm_sqr() * v)
        .sum::<f64>()
        * psi.grid().dq();
    kinetic + potential
}
