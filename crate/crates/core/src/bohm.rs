//! Bohm momentum, quantum potential, residuals of the two real equations
//! obtained from the Schrödinger equation, and trajectory integration.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{polar_decompose, polar_recompose, PhysicalParams, PolarField, Potential, SpatialGrid, WaveField};
use crate::spectral::Spectral;

#[derive(Debug, Clone, PartialEq)]
pub struct MomentumField {
    pub grid: SpatialGrid,
    pub time: f64,
    pub momentum: Vec<f64>,
    pub valid: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumPotentialField {
    pub grid: SpatialGrid,
    pub time: f64,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

/// Pointwise residual of a field equation at the midpoint of two snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub time: f64,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    pub max_abs: f64,
    /// `sqrt(sum w r^2 dq)` over valid points; see the producing function
    /// for the weight `w`.
    pub l2: f64,
}

impl Residual {
    fn new(grid: &SpatialGrid, time: f64, values: Vec<f64>, valid: Vec<bool>, weight: Option<&[f64]>) -> Self {
        let mut max_abs: f64 = 0.0;
        let mut sum = 0.0;
        for (j, r) in values.iter().enumerate() {
            if !valid[j] {
                continue;
            }
            max_abs = max_abs.max(r.abs());
            sum += weight.map_or(1.0, |w| w[j]) * r * r;
        }
        Self {
            time,
            values,
            valid,
            max_abs,
            l2: (sum * grid.dq()).sqrt(),
        }
    }
}

/// `true` where `|psi| >= threshold * max|psi|`.
pub fn amplitude_mask(psi: &WaveField, node_threshold: f64) -> Vec<bool> {
    let amp: Vec<f64> = psi.values().iter().map(|z| z.norm()).collect();
    let cut = node_threshold * amp.iter().cloned().fold(0.0, f64::max);
    amp.into_iter().map(|a| a >= cut).collect()
}

/// `hbar Im(psi* dpsi/dq)`, i.e. `rho dS/dq`.
pub fn momentum_density(psi: &WaveField, params: &PhysicalParams) -> Vec<f64> {
    let sp = Spectral::new(psi.grid());
    let d = sp.derivative(psi.values());
    psi.values()
        .iter()
        .zip(&d)
        .map(|(a, b)| params.hbar * (a.conj() * b).im)
        .collect()
}

/// Bohm momentum `P_B = hbar Im(psi* dpsi/dq) / |psi|^2`, zero on the mask.
pub fn local_momentum(psi: &WaveField, params: &PhysicalParams, node_threshold: f64) -> MomentumField {
    let valid = amplitude_mask(psi, node_threshold);
    let momentum = momentum_density(psi, params)
        .into_iter()
        .zip(psi.values())
        .zip(&valid)
        .map(|((j, z), &ok)| if ok { j / z.norm_sqr() } else { 0.0 })
        .collect();
    MomentumField {
        grid: *psi.grid(),
        time: psi.time(),
        momentum,
        valid,
    }
}

/// Band-limited interpolation of `psi` onto a grid `refine` times finer,
/// by zero-padding its spectrum. Every `refine`-th fine point is an
/// original grid point.
pub fn refine_field(psi: &WaveField, refine: usize) -> Result<WaveField> {
    let g = psi.grid();
    let n = g.n_points();
    let fine = SpatialGrid::new(g.q_min(), g.q_max(), n * refine)?;
    if refine == 1 {
        return WaveField::new(fine, psi.time(), psi.values().to_vec());
    }
    let mut coeffs = psi.values().to_vec();
    Spectral::new(g).forward(&mut coeffs);
    let nf = n * refine;
    let mut padded = vec![Complex64::new(0.0, 0.0); nf];
    for k in 0..n / 2 {
        padded[k] = coeffs[k];
    }
    for k in n / 2 + 1..n {
        padded[nf - n + k] = coeffs[k];
    }
    // the unpaired Nyquist coefficient is shared between +-n/2
    padded[n / 2] = 0.5 * coeffs[n / 2];
    padded[nf - n / 2] = 0.5 * coeffs[n / 2];
    Spectral::new(&fine).inverse(&mut padded);
    let scale = refine as f64;
    WaveField::new(fine, psi.time(), padded.into_iter().map(|z| z * scale).collect())
}

/// Bohm momentum by the polar route: the unwrapped action `S` of `psi`,
/// differenced numerically. The decomposition is done on a grid `refine`
/// times finer (band-limited interpolation of `psi`) so that `S` stays
/// resolved where it turns quickly next to near-nodes; the gradient is
/// then read back at the original points.
pub fn polar_momentum(psi: &WaveField, params: &PhysicalParams, node_threshold: f64, refine: usize) -> Result<MomentumField> {
    if refine == 0 {
        return Err(Error::InvalidParameter {
            name: "refine",
            reason: "must be at least 1".into(),
        });
    }
    let fine = refine_field(psi, refine)?;
    let polar = polar_decompose(&fine, params.hbar, node_threshold)?;
    let gradient = polar.action_gradient();
    let fine_valid = polar.valid();
    let valid: Vec<bool> = amplitude_mask(psi, node_threshold)
        .into_iter()
        .enumerate()
        .map(|(j, ok)| ok && fine_valid[j * refine])
        .collect();
    let momentum = valid
        .iter()
        .enumerate()
        .map(|(j, &ok)| if ok { gradient[j * refine] } else { 0.0 })
        .collect();
    Ok(MomentumField {
        grid: *psi.grid(),
        time: psi.time(),
        momentum,
        valid,
    })
}

/// `Q = -(hbar^2 / 2m) R''/R`, from spectral derivatives of `psi`.
pub fn quantum_potential(polar: &PolarField, params: &PhysicalParams) -> QuantumPotentialField {
    // R''/R = Re(psi''/psi) + Im(psi'/psi)^2. psi is smooth through a node
    // where R has a cusp, so its spectral derivatives do not ring.
    let sp = Spectral::new(polar.grid());
    let psi = polar_recompose(polar);
    let d1 = sp.derivative(psi.values());
    let d2 = sp.second_derivative(psi.values());
    let valid = polar.valid();
    let scale = -params.hbar * params.hbar / (2.0 * params.mass);
    let values = (0..valid.len())
        .map(|j| {
            if valid[j] {
                let z = psi.values()[j];
                scale * ((d2[j] / z).re + (d1[j] / z).im.powi(2))
            } else {
                0.0
            }
        })
        .collect();
    QuantumPotentialField {
        grid: *polar.grid(),
        time: polar.time(),
        values,
        valid,
    }
}

// hbar Im(psi'/psi) from the recomposed field. Unlike differencing S it
// stays accurate next to nodes, where S turns by nearly pi within a cell.
fn phase_gradient(polar: &PolarField, params: &PhysicalParams) -> Vec<f64> {
    let psi = polar_recompose(polar);
    let d1 = Spectral::new(polar.grid()).derivative(psi.values());
    let valid = polar.valid();
    (0..valid.len())
        .map(|j| if valid[j] { params.hbar * (d1[j] / psi.values()[j]).im } else { 0.0 })
        .collect()
}

/// Shifts `target`'s action by the whole number of `2 pi hbar` turns that
/// minimizes `sum |S_target - S_reference|` over commonly valid points.
pub fn match_action_branch(reference: &PolarField, target: &mut PolarField) {
    let turn = 2.0 * PI * reference.hbar();
    let mut diffs: Vec<f64> = (0..reference.action().len())
        .filter(|&j| !reference.node_mask()[j] && !target.node_mask()[j])
        .map(|j| (reference.action()[j] - target.action()[j]) / turn)
        .collect();
    if diffs.is_empty() {
        return;
    }
    diffs.sort_by(f64::total_cmp);
    let median = diffs[diffs.len() / 2].round();
    let cost = |n: f64| diffs.iter().map(|d| (d - n).abs()).sum::<f64>();
    let best = [median - 1.0, median, median + 1.0]
        .into_iter()
        .min_by(|a, b| cost(*a).total_cmp(&cost(*b)))
        .unwrap();
    target.shift_action(best * turn);
}

fn check_pair(t0: f64, g0: &SpatialGrid, t1: f64, g1: &SpatialGrid) -> Result<f64> {
    if !g0.matches(g1) {
        return Err(Error::GridMismatch);
    }
    let dt = t1 - t0;
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter {
            name: "time",
            reason: format!("snapshots must be time-ordered, got {t0} then {t1}"),
        });
    }
    Ok(dt)
}

/// Residual of `dS/dt + (dS/dq)^2/2m + Q + V = 0` at the midpoint time.
///
/// The time derivative is the centred difference of the two snapshots and
/// the spatial terms are averaged over them. The action step is reduced
/// into `(-pi hbar, pi hbar]` pointwise, so `dt` must be short enough that
/// `|dS/dt| dt` stays below that. `l2` is weighted by the
/// midpoint density `(R0^2 + R1^2)/2`, since the equation is only
/// meaningful where the amplitude is non-negligible.
pub fn qhj_residual(polar_t0: &PolarField, polar_t1: &PolarField, pot: &Potential, params: &PhysicalParams) -> Result<Residual> {
    let dt = check_pair(polar_t0.time(), polar_t0.grid(), polar_t1.time(), polar_t1.grid())?;
    if !pot.grid().matches(polar_t0.grid()) {
        return Err(Error::GridMismatch);
    }
    let mut p1 = polar_t1.clone();
    match_action_branch(polar_t0, &mut p1);
    let q0 = quantum_potential(polar_t0, params);
    let q1 = quantum_potential(&p1, params);
    let g0 = phase_gradient(polar_t0, params);
    let g1 = phase_gradient(&p1, params);
    let (s0, s1) = (polar_t0.action(), p1.action());
    let n = s0.len();
    let m2 = 2.0 * params.mass;
    let turn = 2.0 * PI * params.hbar;
    let mut values = vec![0.0; n];
    let mut valid = vec![false; n];
    let mut weight = vec![0.0; n];
    for j in 0..n {
        valid[j] = q0.valid[j] && q1.valid[j];
        weight[j] = 0.5 * (polar_t0.amplitude()[j].powi(2) + p1.amplitude()[j].powi(2));
        if valid[j] {
            let spatial = 0.5 * ((g0[j] * g0[j] + g1[j] * g1[j]) / m2 + q0.values[j] + q1.values[j]);
            // segments between nodes can sit on different branches, so the
            // step is taken modulo a full turn at each point
            let ds = s1[j] - s0[j];
            let ds = ds - turn * (ds / turn).round();
            values[j] = ds / dt + spatial + pot.values()[j];
        }
    }
    Ok(Residual::new(
        polar_t0.grid(),
        0.5 * (polar_t0.time() + polar_t1.time()),
        values,
        valid,
        Some(&weight),
    ))
}

/// Residual of `drho/dt + d(rho dS/dq)/dq / m = 0` at the midpoint time,
/// with `rho dS/dq = hbar Im(psi* dpsi/dq)`. Evaluated at every grid point;
/// `l2` is unweighted.
pub fn continuity_residual(psi_t0: &WaveField, psi_t1: &WaveField, params: &PhysicalParams) -> Result<Residual> {
    let dt = check_pair(psi_t0.time(), psi_t0.grid(), psi_t1.time(), psi_t1.grid())?;
    let sp = Spectral::new(psi_t0.grid());
    let j0 = momentum_density(psi_t0, params);
    let j1 = momentum_density(psi_t1, params);
    let flux: Vec<f64> = j0.iter().zip(&j1).map(|(a, b)| 0.5 * (a + b) / params.mass).collect();
    let div = sp.derivative_real(&flux);
    let (r0, r1) = (psi_t0.density(), psi_t1.density());
    let values: Vec<f64> = (0..r0.len()).map(|j| (r1[j] - r0[j]) / dt + div[j]).collect();
    let valid = vec![true; values.len()];
    Ok(Residual::new(
        psi_t0.grid(),
        0.5 * (psi_t0.time() + psi_t1.time()),
        values,
        valid,
        None,
    ))
}

/// Bohm trajectories on the snapshot time mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub times: Vec<f64>,
    /// `[n_trajectories x n_times]`
    pub positions: Array2<f64>,
    pub seeds: Vec<f64>,
    /// Time index at which a trajectory was frozen near a node or the grid
    /// edge, if it was.
    pub frozen_at: Vec<Option<usize>>,
}

impl TrajectorySet {
    pub fn n_trajectories(&self) -> usize {
        self.seeds.len()
    }

    pub fn trajectory(&self, i: usize) -> Vec<f64> {
        self.positions.row(i).to_vec()
    }

    pub fn positions_at(&self, k: usize) -> Vec<f64> {
        self.positions.column(k).to_vec()
    }
}

/// Checks that states share a grid and sit on a uniform, increasing time mesh.
pub(crate) fn check_time_mesh(states: &[WaveField]) -> Result<f64> {
    if states.len() < 2 {
        return Err(Error::NotEnoughInputs { needed: 2, got: states.len() });
    }
    let grid = states[0].grid();
    let dt = states[1].time() - states[0].time();
    if !(dt > 0.0) {
        return Err(Error::GridMismatch);
    }
    for w in states.windows(2) {
        if !w[1].grid().matches(grid) || ((w[1].time() - w[0].time()) - dt).abs() > 1e-9 * dt.max(1.0) {
            return Err(Error::GridMismatch);
        }
    }
    Ok(dt)
}

/// Grid points within `reach` cells of a masked point.
pub(crate) fn blocked_cells(valid: &[bool], reach: usize) -> Vec<bool> {
    let n = valid.len();
    let mut blocked = vec![false; n];
    for (j, ok) in valid.iter().enumerate() {
        if !ok {
            for b in blocked.iter_mut().take((j + reach + 1).min(n)).skip(j.saturating_sub(reach)) {
                *b = true;
            }
        }
    }
    blocked
}

struct VelocitySlice {
    velocity: Vec<f64>,
    blocked: Vec<bool>,
}

/// Integrates `dq/dt = P_B(q,t)/m` with classical RK4 over the snapshot
/// mesh. Velocities are interpolated cubically in space and linearly in
/// time. A trajectory that comes within two cells of a masked node, or
/// leaves the grid, is frozen where it stands and flagged.
pub fn integrate_trajectories(
    states: &[WaveField],
    seeds: &[f64],
    params: &PhysicalParams,
    node_threshold: f64,
) -> Result<TrajectorySet> {
    let dt = check_time_mesh(states)?;
    let grid = *states[0].grid();
    if let Some(&bad) = seeds.iter().find(|s| !grid.contains(**s)) {
        return Err(Error::SeedOutOfRange(bad));
    }
    let slices: Vec<VelocitySlice> = states
        .par_iter()
        .map(|s| {
            let field = local_momentum(s, params, node_threshold);
            VelocitySlice {
                velocity: field.momentum.iter().map(|p| p / params.mass).collect(),
                blocked: blocked_cells(&field.valid, 2),
            }
        })
        .collect();
    let n_times = states.len();
    let rows: Vec<(Vec<f64>, Option<usize>)> = seeds
        .par_iter()
        .map(|&seed| integrate_one(&grid, &slices, dt, seed))
        .collect();
    let mut positions = Array2::zeros((seeds.len(), n_times));
    let mut frozen_at = Vec::with_capacity(seeds.len());
    for (i, (row, frozen)) in rows.into_iter().enumerate() {
        for (k, q) in row.into_iter().enumerate() {
            positions[[i, k]] = q;
        }
        frozen_at.push(frozen);
    }
    Ok(TrajectorySet {
        times: states.iter().map(|s| s.time()).collect(),
        positions,
        seeds: seeds.to_vec(),
        frozen_at,
    })
}

fn is_blocked(grid: &SpatialGrid, slice: &VelocitySlice, q: f64) -> bool {
    if !grid.contains(q) {
        return true;
    }
    let j = grid.index_of(q).round() as usize;
    slice.blocked[j.min(slice.blocked.len() - 1)]
}

fn integrate_one(grid: &SpatialGrid, slices: &[VelocitySlice], dt: f64, seed: f64) -> (Vec<f64>, Option<usize>) {
    let mut path = Vec::with_capacity(slices.len());
    let mut q = seed;
    let mut frozen = None;
    path.push(q);
    for k in 0..slices.len() - 1 {
        if frozen.is_none() && is_blocked(grid, &slices[k], q) {
            frozen = Some(k);
        }
        if frozen.is_none() {
            let (a, b) = (&slices[k].velocity, &slices[k + 1].velocity);
            let v0 = |x: f64| grid.interpolate_cubic(a, x);
            let v1 = |x: f64| grid.interpolate_cubic(b, x);
            let vm = |x: f64| 0.5 * (v0(x) + v1(x));
            let k1 = v0(q);
            let k2 = vm(q + 0.5 * dt * k1);
            let k3 = vm(q + 0.5 * dt * k2);
            let k4 = v1(q + dt * k3);
            let next = q + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if next.is_finite() && grid.contains(next) {
                q = next;
            } else {
                frozen = Some(k + 1);
            }
        }
        path.push(q);
    }
    if frozen.is_none() && is_blocked(grid, &slices[slices.len() - 1], q) {
        frozen = Some(slices.len() - 1);
    }
    (path, frozen)
}

/// Number of (time, neighbouring pair) order inversions, with trajectories
/// ordered by seed. Zero means no two trajectories ever cross.
pub fn count_crossings(set: &TrajectorySet) -> usize {
    let mut order: Vec<usize> = (0..set.n_trajectories()).collect();
    order.sort_by(|&a, &b| set.seeds[a].total_cmp(&set.seeds[b]));
    let mut count = 0;
    for k in 0..set.times.len() {
        for w in order.windows(2) {
            if set.positions[[w[0], k]] > set.positions[[w[1], k]] {
                count += 1;
            }
        }
    }
    count
}

/// `n` positions at the density quantiles `(i + 1/2)/n`, treating the
/// density as constant over each grid cell.
pub fn quantile_seeds(psi: &WaveField, n: usize) -> Vec<f64> {
    let g = psi.grid();
    let rho = psi.density();
    let total: f64 = rho.iter().sum();
    let mut seeds = Vec::with_capacity(n);
    let mut acc = 0.0;
    let mut j = 0;
    for i in 0..n {
        let target = (i as f64 + 0.5) / n as f64 * total;
        while j < rho.len() - 1 && acc + rho[j] < target {
            acc += rho[j];
            j += 1;
        }
        let frac = if rho[j] > 0.0 { ((target - acc) / rho[j]).clamp(0.0, 1.0) } else { 0.5 };
        let q = g.point(j) - 0.5 * g.dq() + frac * g.dq();
        seeds.push(q.clamp(g.q_min(), g.point(g.n_points() - 1)));
    }
    seeds
}

/// L1 distance between the empirical distribution of `positions` and the
/// grid density of `psi`, both binned in groups of `cells_per_bin` grid
/// cells. Bin edges sit at cell boundaries `q_j - dq/2`.
pub fn histogram_l1(positions: &[f64], psi: &WaveField, cells_per_bin: usize) -> f64 {
    let g = psi.grid();
    let n = g.n_points();
    let n_bins = n.div_ceil(cells_per_bin);
    let mut expected = vec![0.0; n_bins];
    let rho = psi.density();
    let total: f64 = rho.iter().sum();
    for (j, r) in rho.iter().enumerate() {
        expected[j / cells_per_bin] += r / total;
    }
    let mut observed = vec![0.0; n_bins];
    let w = 1.0 / positions.len() as f64;
    for &q in positions {
        let cell = (g.index_of(q) + 0.5).floor().clamp(0.0, (n - 1) as f64) as usize;
        observed[cell / cells_per_bin] += w;
    }
    expected.iter().zip(&observed).map(|(a, b)| (a - b).abs()).sum()
}
