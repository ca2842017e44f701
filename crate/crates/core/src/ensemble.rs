//! Momentum representation, the mean momentum of the momentum spray at a
//! point, and stochastic path ensembles whose conditional mean velocity is
//! compared with it.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::bohm::{self, check_time_mesh, MomentumField};
use crate::error::{Error, Result};
use crate::fields::{PhysicalParams, SpatialGrid, WaveField};
use crate::spectral::Spectral;

/// `phi(p_k) = dq / sqrt(2 pi hbar) sum_j psi_j exp(-i p_k q_j / hbar)` on
/// the conjugate grid `p_k = 2 pi hbar k / L`, `k = -n/2 .. n/2 - 1`,
/// stored in ascending order of `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumRepresentation {
    pub p_grid: Vec<f64>,
    pub phi: Vec<Complex64>,
    pub time: f64,
    grid: SpatialGrid,
    hbar: f64,
}

impl MomentumRepresentation {
    pub fn dp(&self) -> f64 {
        2.0 * PI * self.hbar / self.grid.length()
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn norm_squared(&self) -> f64 {
        self.phi.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.dp()
    }

    pub fn density(&self) -> Vec<f64> {
        self.phi.iter().map(|z| z.norm_sqr()).collect()
    }

    /// `<p>` from `|phi|^2`.
    pub fn mean_momentum(&self) -> f64 {
        self.phi.iter().zip(&self.p_grid).map(|(z, p)| z.norm_sqr() * p).sum::<f64>() * self.dp()
    }
}

fn fft_order_to_signed(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

pub fn to_momentum_rep(psi: &WaveField, params: &PhysicalParams) -> MomentumRepresentation {
    let g = *psi.grid();
    let n = g.n_points();
    let sp = Spectral::new(&g);
    let mut data = psi.values().to_vec();
    sp.forward(&mut data);
    let hbar = params.hbar;
    let dp = 2.0 * PI * hbar / g.length();
    let scale = g.dq() / (2.0 * PI * hbar).sqrt();
    let mut p_grid = vec![0.0; n];
    let mut phi = vec![Complex64::new(0.0, 0.0); n];
    for (k, z) in data.into_iter().enumerate() {
        let ks = fft_order_to_signed(k, n);
        let slot = (ks + n as i64 / 2) as usize;
        let p = ks as f64 * dp;
        p_grid[slot] = p;
        // the transform runs over j; the origin of q is q_min
        phi[slot] = z * Complex64::from_polar(scale, -p * g.q_min() / hbar);
    }
    MomentumRepresentation {
        p_grid,
        phi,
        time: psi.time(),
        grid: g,
        hbar,
    }
}

pub fn from_momentum_rep(rep: &MomentumRepresentation) -> WaveField {
    let g = rep.grid;
    let n = g.n_points();
    let sp = Spectral::new(&g);
    let mut data = vec![Complex64::new(0.0, 0.0); n];
    // undo the forward scaling; `inverse` already divides by n
    let scale = (2.0 * PI * rep.hbar).sqrt() / g.dq();
    for (slot, z) in rep.phi.iter().enumerate() {
        let ks = slot as i64 - n as i64 / 2;
        let k = ks.rem_euclid(n as i64) as usize;
        let p = rep.p_grid[slot];
        data[k] = z * Complex64::from_polar(scale, p * g.q_min() / rep.hbar);
    }
    sp.inverse(&mut data);
    WaveField::new(g, rep.time, data).expect("grid length")
}

/// Momentum components with `|phi| < PRUNE * max|phi|` are dropped from the
/// double momentum sum. Their pair contributions sit far below roundoff of
/// the retained ones.
pub const MOYAL_PRUNE: f64 = 1e-14;

/// Mean momentum of the spray through each point `Q`, from the double sum
///
/// `rho P(Q) = (dp^2 / 2 pi hbar) sum_{p,p'} (p + p')/2 phi*(p') phi(p) exp(i (p - p') Q / hbar)`
///
/// divided by `rho` off the mask. This is `O(m^2 n)` in the number `m` of
/// retained momentum components.
pub fn moyal_mean_momentum(psi: &WaveField, params: &PhysicalParams, node_threshold: f64) -> MomentumField {
    let (current, valid) = moyal_current(psi, params, node_threshold);
    let momentum = current
        .iter()
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

/// The `rho P` numerator of [`moyal_mean_momentum`] at every grid point.
pub fn moyal_current(psi: &WaveField, params: &PhysicalParams, node_threshold: f64) -> (Vec<f64>, Vec<bool>) {
    let rep = to_momentum_rep(psi, params);
    let peak = rep.phi.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let kept: Vec<(f64, Complex64)> = rep
        .p_grid
        .iter()
        .zip(&rep.phi)
        .filter(|(_, z)| z.norm() >= MOYAL_PRUNE * peak)
        .map(|(&p, &z)| (p, z))
        .collect();
    let hbar = params.hbar;
    let dp = rep.dp();
    let prefactor = dp * dp / (2.0 * PI * hbar);
    let g = *psi.grid();
    let current = (0..g.n_points())
        .into_par_iter()
        .map(|j| {
            let q = g.point(j);
            let a: Vec<Complex64> = kept.iter().map(|&(p, z)| z * Complex64::from_polar(1.0, p * q / hbar)).collect();
            let mut sum = Complex64::new(0.0, 0.0);
            for (&(p1, _), a1) in kept.iter().zip(&a) {
                let mut inner = Complex64::new(0.0, 0.0);
                for (&(p2, _), a2) in kept.iter().zip(&a) {
                    inner += 0.5 * (p1 + p2) * a2.conj();
                }
                sum += inner * a1;
            }
            prefactor * sum.re
        })
        .collect();
    (current, bohm::amplitude_mask(psi, node_threshold))
}

/// The point (Moyal) form `rho P = (hbar / 2i)(psi* dpsi/dq - psi dpsi*/dq)`,
/// with both derivatives taken spectrally.
pub fn moyal_point_current(psi: &WaveField, params: &PhysicalParams) -> Vec<f64> {
    let sp = Spectral::new(psi.grid());
    let conj: Vec<Complex64> = psi.values().iter().map(|z| z.conj()).collect();
    let d = sp.derivative(psi.values());
    let dc = sp.derivative(&conj);
    let half_over_i = Complex64::new(0.0, -0.5 * params.hbar);
    psi.values()
        .iter()
        .zip(&conj)
        .zip(d.iter().zip(&dc))
        .map(|((z, zc), (dz, dzc))| (half_over_i * (zc * dz - z * dzc)).re)
        .collect()
}

pub fn moyal_point_momentum(psi: &WaveField, params: &PhysicalParams, node_threshold: f64) -> MomentumField {
    let valid = bohm::amplitude_mask(psi, node_threshold);
    let momentum = moyal_point_current(psi, params)
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

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftKind {
    /// `b = (P + hbar rho' / 2 rho) / m`, diffusion coefficient `hbar / 2m`.
    NelsonForward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub n_paths: usize,
    /// Spacing of the recorded times.
    pub dt: f64,
    pub times: Vec<f64>,
    /// `[n_paths x n_times]`
    pub positions: Array2<f64>,
    pub rng_seed: u64,
    pub drift_kind: DriftKind,
    /// Recorded time index at which a path left the grid; the path is
    /// held at its last interior position from there on.
    pub escaped_at: Vec<Option<usize>>,
}

impl PathEnsemble {
    pub fn positions_at(&self, k: usize) -> Vec<f64> {
        self.positions.column(k).to_vec()
    }

    /// Positions at time index `k` of paths still inside the grid.
    pub fn live_positions_at(&self, k: usize) -> Vec<f64> {
        (0..self.n_paths)
            .filter(|&i| self.escaped_at[i].is_none_or(|e| e > k))
            .map(|i| self.positions[[i, k]])
            .collect()
    }

    pub fn n_escaped(&self) -> usize {
        self.escaped_at.iter().filter(|e| e.is_some()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingOptions {
    /// Keep every `record_every`-th state of the Euler-Maruyama mesh.
    pub record_every: usize,
    /// Density floor relative to `max rho` added to the drift denominator.
    pub density_floor: f64,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self {
            record_every: 1,
            density_floor: 1e-12,
        }
    }
}

/// Forward drift `b = (hbar/m)(Im + Re)(psi* psi')/rho` on the grid.
pub fn nelson_drift(psi: &WaveField, params: &PhysicalParams, density_floor: f64) -> Vec<f64> {
    let sp = Spectral::new(psi.grid());
    let d = sp.derivative(psi.values());
    let rho = psi.density();
    let floor = density_floor * rho.iter().cloned().fold(0.0, f64::max);
    let k = params.hbar / params.mass;
    psi.values()
        .iter()
        .zip(&d)
        .zip(&rho)
        .map(|((z, dz), r)| {
            let w = z.conj() * dz;
            k * (w.im + w.re) / (r + floor)
        })
        .collect()
}

/// Inverse-CDF draw from the cell-constant density.
fn sample_density(cdf: &[f64], grid: &SpatialGrid, u: f64) -> f64 {
    let total = *cdf.last().expect("non-empty");
    let target = u * total;
    let j = cdf.partition_point(|&c| c < target).min(cdf.len() - 1);
    let below = if j == 0 { 0.0 } else { cdf[j - 1] };
    let cell = cdf[j] - below;
    let frac = if cell > 0.0 { ((target - below) / cell).clamp(0.0, 1.0) } else { 0.5 };
    grid.point(j) - 0.5 * grid.dq() + frac * grid.dq()
}

/// Nelson paths `X_{k+1} = X_k + b(X_k, t_k) dt + sqrt(hbar dt / m) xi`
/// on the time mesh of `states`, with `X_0` drawn from `|psi_0|^2`.
///
/// Path `i` draws from its own ChaCha20 stream `i` keyed by `rng_seed`, so
/// the result does not depend on how paths are spread over threads.
pub fn sample_paths(
    states: &[WaveField],
    n_paths: usize,
    rng_seed: u64,
    params: &PhysicalParams,
    options: &SamplingOptions,
) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(Error::InvalidParameter {
            name: "n_paths",
            reason: "must be at least 1".into(),
        });
    }
    if options.record_every == 0 {
        return Err(Error::InvalidParameter {
            name: "record_every",
            reason: "must be at least 1".into(),
        });
    }
    let dt = check_time_mesh(states)?;
    let grid = *states[0].grid();
    let drifts: Vec<Vec<f64>> = states
        .par_iter()
        .map(|s| nelson_drift(s, params, options.density_floor))
        .collect();
    let mut cdf = states[0].density();
    for j in 1..cdf.len() {
        cdf[j] += cdf[j - 1];
    }
    let noise = (params.hbar * dt / params.mass).sqrt();
    let n_steps = states.len() - 1;
    let recorded: Vec<usize> = (0..=n_steps).filter(|k| k % options.record_every == 0).collect();
    let n_rec = recorded.len();
    let (lo, hi) = (grid.q_min(), grid.point(grid.n_points() - 1));

    let rows: Vec<(Vec<f64>, Option<usize>)> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
            rng.set_stream(i as u64);
            let mut x = sample_density(&cdf, &grid, rng.random::<f64>()).clamp(lo, hi);
            let mut row = Vec::with_capacity(n_rec);
            let mut escaped = None;
            for k in 0..=n_steps {
                if k % options.record_every == 0 {
                    row.push(x);
                }
                if k == n_steps {
                    break;
                }
                let xi: f64 = rng.sample(StandardNormal);
                if escaped.is_none() {
                    let next = x + grid.interpolate_cubic(&drifts[k], x) * dt + noise * xi;
                    if next.is_finite() && (lo..=hi).contains(&next) {
                        x = next;
                    } else {
                        // first recorded index strictly after this step
                        escaped = Some((k + 1).div_ceil(options.record_every));
                    }
                }
            }
            (row, escaped)
        })
        .collect();

    let mut positions = Array2::zeros((n_paths, n_rec));
    let mut escaped_at = Vec::with_capacity(n_paths);
    for (i, (row, esc)) in rows.into_iter().enumerate() {
        for (k, x) in row.into_iter().enumerate() {
            positions[[i, k]] = x;
        }
        escaped_at.push(esc.filter(|&e| e < n_rec));
    }
    Ok(PathEnsemble {
        n_paths,
        dt: dt * options.record_every as f64,
        times: recorded.iter().map(|&k| states[k].time()).collect(),
        positions,
        rng_seed,
        drift_kind: DriftKind::NelsonForward,
        escaped_at,
    })
}

/// Uniform spatial bins `[lo + b w, lo + (b+1) w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Binning {
    pub lo: f64,
    pub width: f64,
    pub n_bins: usize,
}

impl Binning {
    pub fn new(lo: f64, width: f64, n_bins: usize) -> Result<Self> {
        if !(width > 0.0) || n_bins == 0 || !lo.is_finite() {
            return Err(Error::InvalidParameter {
                name: "bins",
                reason: format!("need width > 0 and at least one bin, got width={width}, n_bins={n_bins}"),
            });
        }
        Ok(Self { lo, width, n_bins })
    }

    /// Bins of `cells` grid cells each, with edges on cell boundaries.
    pub fn cells(grid: &SpatialGrid, cells: usize) -> Result<Self> {
        if cells == 0 {
            return Err(Error::InvalidParameter {
                name: "bins",
                reason: "cells per bin must be at least 1".into(),
            });
        }
        Self::new(
            grid.q_min() - 0.5 * grid.dq(),
            cells as f64 * grid.dq(),
            grid.n_points().div_ceil(cells),
        )
    }

    pub fn index(&self, q: f64) -> Option<usize> {
        let b = ((q - self.lo) / self.width).floor();
        (b >= 0.0 && (b as usize) < self.n_bins).then_some(b as usize)
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_bins).map(|b| self.lo + (b as f64 + 0.5) * self.width).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalStats {
    pub time: f64,
    pub bin_centers: Vec<f64>,
    pub bin_width: f64,
    /// Mean of `(X_{k+1} - X_{k-1}) / 2dt` per bin; NaN in empty bins.
    pub mean_velocity: Vec<f64>,
    /// `sample_std / sqrt(count)`; NaN below two counts.
    pub std_error: Vec<f64>,
    pub counts: Vec<usize>,
    /// One-sided means `(X_{k+1} - X_k)/dt` and `(X_k - X_{k-1})/dt`.
    pub forward_velocity: Vec<f64>,
    pub backward_velocity: Vec<f64>,
}

impl ConditionalStats {
    pub fn total_count(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Default, Clone, Copy)]
struct Accum {
    n: usize,
    sum: f64,
    sum_sq: f64,
    fwd: f64,
    bwd: f64,
}

/// Conditional mean current velocity given `X_k` in each bin, over paths
/// inside the grid at `k - 1`, `k`, `k + 1`.
pub fn conditional_mean_velocity(ens: &PathEnsemble, t_index: usize, bins: &Binning) -> Result<ConditionalStats> {
    let n_times = ens.times.len();
    if t_index == 0 || t_index + 1 >= n_times {
        return Err(Error::InvalidParameter {
            name: "t_index",
            reason: format!("need 1 <= t_index <= {}, got {t_index}", n_times.saturating_sub(2)),
        });
    }
    let mut acc = vec![Accum::default(); bins.n_bins];
    for i in 0..ens.n_paths {
        if ens.escaped_at[i].is_some_and(|e| e <= t_index + 1) {
            continue;
        }
        let (a, x, c) = (
            ens.positions[[i, t_index - 1]],
            ens.positions[[i, t_index]],
            ens.positions[[i, t_index + 1]],
        );
        if let Some(b) = bins.index(x) {
            let v = (c - a) / (2.0 * ens.dt);
            let slot = &mut acc[b];
            slot.n += 1;
            slot.sum += v;
            slot.sum_sq += v * v;
            slot.fwd += (c - x) / ens.dt;
            slot.bwd += (x - a) / ens.dt;
        }
    }
    let mut stats = ConditionalStats {
        time: ens.times[t_index],
        bin_centers: bins.centers(),
        bin_width: bins.width,
        mean_velocity: Vec::with_capacity(bins.n_bins),
        std_error: Vec::with_capacity(bins.n_bins),
        counts: Vec::with_capacity(bins.n_bins),
        forward_velocity: Vec::with_capacity(bins.n_bins),
        backward_velocity: Vec::with_capacity(bins.n_bins),
    };
    for a in acc {
        let n = a.n as f64;
        let mean = if a.n > 0 { a.sum / n } else { f64::NAN };
        let se = if a.n > 1 {
            ((a.sum_sq - n * mean * mean).max(0.0) / (n - 1.0)).sqrt() / n.sqrt()
        } else {
            f64::NAN
        };
        stats.mean_velocity.push(mean);
        stats.std_error.push(se);
        stats.counts.push(a.n);
        stats.forward_velocity.push(if a.n > 0 { a.fwd / n } else { f64::NAN });
        stats.backward_velocity.push(if a.n > 0 { a.bwd / n } else { f64::NAN });
    }
    Ok(stats)
}

/// Density-weighted bin average of `rho P / m`, i.e. `sum j / sum rho / m`
/// over the grid points in each bin, the quantity a conditional mean over
/// a bin estimates. `None` where the bin holds no density.
pub fn binned_reference_velocity(psi: &WaveField, current: &[f64], bins: &Binning, params: &PhysicalParams) -> Vec<Option<f64>> {
    let g = psi.grid();
    let mut num = vec![0.0; bins.n_bins];
    let mut den = vec![0.0; bins.n_bins];
    for (j, (z, c)) in psi.values().iter().zip(current).enumerate() {
        if let Some(b) = bins.index(g.point(j)) {
            num[b] += c;
            den[b] += z.norm_sqr();
        }
    }
    num.into_iter()
        .zip(den)
        .map(|(a, r)| (r > 0.0).then(|| a / r / params.mass))
        .collect()
}

/// Binned flux `count * mean_velocity` and density `count` at bin centres.
fn flux_profile(stats: &ConditionalStats) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let mut flux = Vec::with_capacity(stats.counts.len());
    let mut density = Vec::with_capacity(stats.counts.len());
    for ((&q, &v), &c) in stats.bin_centers.iter().zip(&stats.mean_velocity).zip(&stats.counts) {
        flux.push((q, if c > 0 { c as f64 * v } else { 0.0 }));
        density.push((q, c as f64));
    }
    (flux, density)
}

/// Piecewise-linear interpolation through `(x, y)` pairs sorted by `x`,
/// held constant beyond the ends.
fn eval_profile(profile: &[(f64, f64)], q: f64) -> f64 {
    match profile.len() {
        0 => 0.0,
        1 => profile[0].1,
        _ => {
            let j = profile.partition_point(|&(x, _)| x < q);
            if j == 0 {
                profile[0].1
            } else if j == profile.len() {
                profile[j - 1].1
            } else {
                let (x0, v0) = profile[j - 1];
                let (x1, v1) = profile[j];
                v0 + (v1 - v0) * (q - x0) / (x1 - x0)
            }
        }
    }
}

/// Integrates `dq/dt = v(q, t)` through the flow field of the ensemble.
/// Between bin centres `v` is the ratio of the linearly interpolated binned
/// flux to the linearly interpolated binned density. Interpolating the
/// mean velocity itself would flatten the `j / rho` peaks next to density
/// minima. In time the flux and density are interpolated linearly between
/// recorded times, and each recorded interval is crossed in `substeps` RK4
/// steps. `stats[k]` belongs to the recorded time `k dt`.
pub fn reintegrate_from_bins(stats: &[ConditionalStats], dt: f64, seed: f64, substeps: usize) -> Vec<f64> {
    let profiles: Vec<_> = stats.iter().map(flux_profile).collect();
    let substeps = substeps.max(1);
    let h = dt / substeps as f64;
    let mut q = seed;
    let mut path = vec![q];
    for w in profiles.windows(2) {
        let v = |x: f64, frac: f64| {
            let j = (1.0 - frac) * eval_profile(&w[0].0, x) + frac * eval_profile(&w[1].0, x);
            let r = (1.0 - frac) * eval_profile(&w[0].1, x) + frac * eval_profile(&w[1].1, x);
            if r > 0.0 {
                j / r
            } else {
                0.0
            }
        };
        for s in 0..substeps {
            let (f0, fh, f1) = (
                s as f64 / substeps as f64,
                (s as f64 + 0.5) / substeps as f64,
                (s + 1) as f64 / substeps as f64,
            );
            let k1 = v(q, f0);
            let k2 = v(q + 0.5 * h * k1, fh);
            let k3 = v(q + 0.5 * h * k2, fh);
            let k4 = v(q + h * k3, f1);
            q += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        path.push(q);
    }
    path
}

/// Conditional statistics at every interior recorded time, with the first
/// and last entries copied from their neighbours so the result lines up
/// with `ens.times`.
pub fn conditional_series(ens: &PathEnsemble, bins: &Binning) -> Result<Vec<ConditionalStats>> {
    let n = ens.times.len();
    if n < 3 {
        return Err(Error::NotEnoughInputs { needed: 3, got: n });
    }
    let mut inner = (1..n - 1)
        .into_par_iter()
        .map(|k| conditional_mean_velocity(ens, k, bins))
        .collect::<Result<Vec<_>>>()?;
    let mut first = inner[0].clone();
    first.time = ens.times[0];
    let mut last = inner[inner.len() - 1].clone();
    last.time = ens.times[n - 1];
    inner.insert(0, first);
    inner.push(last);
    Ok(inner)
}
