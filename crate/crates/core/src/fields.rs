//! Grids, wave functions, potentials and the amplitude/action split.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Default node threshold, as a fraction of the maximum amplitude.
pub const DEFAULT_NODE_THRESHOLD: f64 = 1e-6;

/// Uniform periodic discretization `q_j = q_min + j*dq`, `j in [0, n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    q_min: f64,
    q_max: f64,
    n_points: usize,
    dq: f64,
}

impl SpatialGrid {
    pub fn new(q_min: f64, q_max: f64, n_points: usize) -> Result<Self> {
        if !(q_min.is_finite() && q_max.is_finite()) || q_max <= q_min {
            return Err(Error::InvertedBounds { q_min, q_max });
        }
        if n_points < 8 {
            return Err(Error::TooFewPoints(n_points));
        }
        if !n_points.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(n_points));
        }
        Ok(Self {
            q_min,
            q_max,
            n_points,
            dq: (q_max - q_min) / n_points as f64,
        })
    }

    pub fn q_min(&self) -> f64 {
        self.q_min
    }

    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dq(&self) -> f64 {
        self.dq
    }

    pub fn length(&self) -> f64 {
        self.q_max - self.q_min
    }

    pub fn point(&self, j: usize) -> f64 {
        self.q_min + j as f64 * self.dq
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.point(j)).collect()
    }

    /// Whether `q` lies in the sampled interval `[q_min, q_last]`.
    pub fn contains(&self, q: f64) -> bool {
        q >= self.q_min && q <= self.point(self.n_points - 1)
    }

    /// Same grid up to floating-point noise in the bounds.
    pub fn matches(&self, other: &SpatialGrid) -> bool {
        let tol = 1e-12 * self.length().max(1.0);
        self.n_points == other.n_points
            && (self.q_min - other.q_min).abs() <= tol
            && (self.q_max - other.q_max).abs() <= tol
    }

    /// Fractional index of `q`.
    pub fn index_of(&self, q: f64) -> f64 {
        (q - self.q_min) / self.dq
    }

    /// Four-point cubic Lagrange interpolation of grid samples. Outside the
    /// grid the stencil is clamped to the boundary cells.
    pub fn interpolate_cubic(&self, values: &[f64], q: f64) -> f64 {
        let n = self.n_points;
        let x = self.index_of(q);
        let base = (x.floor() as isize).clamp(1, n as isize - 3) as usize;
        let t = x - base as f64;
        let (f0, f1, f2, f3) = (values[base - 1], values[base], values[base + 1], values[base + 2]);
        let w0 = -t * (t - 1.0) * (t - 2.0) / 6.0;
        let w1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
        let w2 = -(t + 1.0) * t * (t - 2.0) / 2.0;
        let w3 = (t + 1.0) * t * (t - 1.0) / 6.0;
        w0 * f0 + w1 * f1 + w2 * f2 + w3 * f3
    }

    pub fn interpolate_linear(&self, values: &[f64], q: f64) -> f64 {
        let n = self.n_points;
        let x = self.index_of(q);
        let base = (x.floor() as isize).clamp(0, n as isize - 2) as usize;
        let t = x - base as f64;
        values[base] * (1.0 - t) + values[base + 1] * t
    }
}

/// Action scale and particle mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    pub hbar: f64,
    pub mass: f64,
}

impl PhysicalParams {
    pub fn new(hbar: f64, mass: f64) -> Result<Self> {
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::InvalidParameter {
                name: "hbar",
                reason: format!("must be positive, got {hbar}"),
            });
        }
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::InvalidParameter {
                name: "mass",
                reason: format!("must be positive, got {mass}"),
            });
        }
        Ok(Self { hbar, mass })
    }
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self { hbar: 1.0, mass: 1.0 }
    }
}

/// Complex wave-function samples on a grid at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    grid: SpatialGrid,
    time: f64,
    values: Vec<Complex64>,
}

impl WaveField {
    pub fn new(grid: SpatialGrid, time: f64, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid, time, values })
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    /// `sum |psi_j|^2 dq`
    pub fn norm_squared(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dq()
    }

    pub fn normalized(mut self) -> Self {
        let n = self.norm_squared().sqrt();
        if n > 0.0 {
            for v in &mut self.values {
                *v /= n;
            }
        }
        self
    }

    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm_sqr()).collect()
    }

    /// `<self|other>` with the grid quadrature weight.
    pub fn inner(&self, other: &WaveField) -> Result<Complex64> {
        if !self.grid.matches(&other.grid) {
            return Err(Error::GridMismatch);
        }
        let s: Complex64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(s * self.grid.dq())
    }

    /// Discrete L2 distance `sqrt(sum |a-b|^2 dq)`.
    pub fn l2_distance(&self, other: &WaveField) -> Result<f64> {
        if !self.grid.matches(&other.grid) {
            return Err(Error::GridMismatch);
        }
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        Ok((s * self.grid.dq()).sqrt())
    }

    pub fn write_csv<W: Write>(&self, params: &PhysicalParams, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "# time={:.16e},hbar={:.16e},mass={:.16e}",
            self.time, params.hbar, params.mass
        )?;
        writeln!(out, "q,re_psi,im_psi")?;
        for (j, z) in self.values.iter().enumerate() {
            writeln!(out, "{:.16e},{:.16e},{:.16e}", self.grid.point(j), z.re, z.im)?;
        }
        Ok(())
    }

    /// Reads the `(q, re_psi, im_psi)` layout written by [`WaveField::write_csv`].
    /// The grid is reconstructed from the first two abscissae and the row count.
    pub fn read_csv<R: BufRead>(input: R) -> std::result::Result<(Self, PhysicalParams), String> {
        let mut header = None;
        let mut rows: Vec<[f64; 3]> = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| e.to_string())?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                header = Some(parse_header(rest).map_err(|e| format!("line {}: {e}", lineno + 1))?);
                continue;
            }
            if line.starts_with('q') {
                continue;
            }
            let cols: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| format!("line {}: {e}", lineno + 1))?;
            if cols.len() != 3 {
                return Err(format!("line {}: expected 3 columns, got {}", lineno + 1, cols.len()));
            }
            rows.push([cols[0], cols[1], cols[2]]);
        }
        let (time, hbar, mass) = header.ok_or("missing `# time=..,hbar=..,mass=..` header")?;
        if rows.len() < 2 {
            return Err("need at least two rows".into());
        }
        let dq = rows[1][0] - rows[0][0];
        let n = rows.len();
        let grid = SpatialGrid::new(rows[0][0], rows[0][0] + dq * n as f64, n).map_err(|e| e.to_string())?;
        let values = rows.iter().map(|r| Complex64::new(r[1], r[2])).collect();
        let params = PhysicalParams::new(hbar, mass).map_err(|e| e.to_string())?;
        Ok((Self::new(grid, time, values).map_err(|e| e.to_string())?, params))
    }
}

fn parse_header(s: &str) -> std::result::Result<(f64, f64, f64), String> {
    let (mut time, mut hbar, mut mass) = (None, None, None);
    for item in s.split(',') {
        let (k, v) = item.split_once('=').ok_or_else(|| format!("bad header item `{item}`"))?;
        let v: f64 = v.trim().parse().map_err(|e| format!("{k}: {e}"))?;
        match k.trim() {
            "time" => time = Some(v),
            "hbar" => hbar = Some(v),
            "mass" => mass = Some(v),
            other => return Err(format!("unknown header key `{other}`")),
        }
    }
    Ok((
        time.ok_or("header lacks time")?,
        hbar.ok_or("header lacks hbar")?,
        mass.ok_or("header lacks mass")?,
    ))
}

/// One term of a Gaussian superposition, `weight * exp(-(q-c)^2/4w^2 + i p0 q/hbar)`,
/// each term individually normalized before weighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianComponent {
    pub center: f64,
    pub width: f64,
    pub p0: f64,
    pub weight: Complex64,
}

fn check_support(grid: &SpatialGrid, center: f64, width: f64) -> Result<()> {
    if !(width.is_finite() && width > 0.0) {
        return Err(Error::InvalidParameter {
            name: "width",
            reason: format!("must be positive, got {width}"),
        });
    }
    let (lo, hi) = (center - 6.0 * width, center + 6.0 * width);
    if lo < grid.q_min() || hi > grid.q_max() {
        return Err(Error::PacketEscapesGrid {
            lo,
            hi,
            q_min: grid.q_min(),
            q_max: grid.q_max(),
        });
    }
    Ok(())
}

fn gaussian_values(grid: &SpatialGrid, params: &PhysicalParams, c: &GaussianComponent) -> Vec<Complex64> {
    let norm = (2.0 * PI * c.width * c.width).powf(-0.25);
    grid.points()
        .into_iter()
        .map(|q| {
            let env = (-(q - c.center).powi(2) / (4.0 * c.width * c.width)).exp();
            c.weight * norm * env * Complex64::from_polar(1.0, c.p0 * q / params.hbar)
        })
        .collect()
}

/// Normalized superposition of Gaussian packets.
pub fn superposition(grid: &SpatialGrid, params: &PhysicalParams, components: &[GaussianComponent]) -> Result<WaveField> {
    if components.is_empty() {
        return Err(Error::NotEnoughInputs { needed: 1, got: 0 });
    }
    let mut values = vec![Complex64::new(0.0, 0.0); grid.n_points()];
    for c in components {
        check_support(grid, c.center, c.width)?;
        for (v, g) in values.iter_mut().zip(gaussian_values(grid, params, c)) {
            *v += g;
        }
    }
    let psi = WaveField::new(*grid, 0.0, values)?;
    if psi.norm_squared() == 0.0 {
        return Err(Error::InvalidParameter {
            name: "weight",
            reason: "superposition vanishes identically".into(),
        });
    }
    Ok(psi.normalized())
}

/// `psi(q) ~ exp(-(q-center)^2/4 width^2 + i p0 q/hbar)`, normalized.
pub fn gaussian_packet(grid: &SpatialGrid, params: &PhysicalParams, center: f64, width: f64, p0: f64) -> Result<WaveField> {
    superposition(
        grid,
        params,
        &[GaussianComponent {
            center,
            width,
            p0,
            weight: Complex64::new(1.0, 0.0),
        }],
    )
}

/// Equal-weight sum of packets at `-sep/2` (momentum `p0a`) and `+sep/2` (`p0b`).
pub fn two_packet_superposition(
    grid: &SpatialGrid,
    params: &PhysicalParams,
    sep: f64,
    width: f64,
    p0a: f64,
    p0b: f64,
) -> Result<WaveField> {
    if !(sep.is_finite() && sep > 0.0) {
        return Err(Error::InvalidParameter {
            name: "sep",
            reason: format!("must be positive, got {sep}"),
        });
    }
    let one = Complex64::new(1.0, 0.0);
    superposition(
        grid,
        params,
        &[
            GaussianComponent { center: -sep / 2.0, width, p0: p0a, weight: one },
            GaussianComponent { center: sep / 2.0, width, p0: p0b, weight: one },
        ],
    )
}

/// Amplitude/action form `psi = R exp(iS/hbar)` with node mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarField {
    grid: SpatialGrid,
    time: f64,
    hbar: f64,
    amplitude: Vec<f64>,
    action: Vec<f64>,
    node_mask: Vec<bool>,
    masked_values: Vec<Complex64>,
}

impl PolarField {
    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// `R`
    pub fn amplitude(&self) -> &[f64] {
        &self.amplitude
    }

    /// `S`, unwrapped, in units of action.
    pub fn action(&self) -> &[f64] {
        &self.action
    }

    /// `true` where `R` falls below the node threshold.
    pub fn node_mask(&self) -> &[bool] {
        &self.node_mask
    }

    pub fn valid(&self) -> Vec<bool> {
        self.node_mask.iter().map(|m| !m).collect()
    }

    /// Adds `shift` to the action everywhere.
    pub fn shift_action(&mut self, shift: f64) {
        for s in &mut self.action {
            *s += shift;
        }
    }

    /// Action with masked gaps replaced by linear interpolation between the
    /// nearest valid neighbours (held constant beyond the outermost ones).
    pub fn bridged_action(&self) -> Vec<f64> {
        bridge_masked(&self.action, &self.node_mask)
    }

    /// `dS/dq` from high-order differences of the unwrapped action.
    pub fn action_gradient(&self) -> Vec<f64> {
        let bridged = self.bridged_action();
        crate::spectral::finite_difference_gradient(&bridged, self.grid.dq(), &self.valid())
    }

    pub fn write_csv<W: Write>(&self, params: &PhysicalParams, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "# time={:.16e},hbar={:.16e},mass={:.16e}",
            self.time, params.hbar, params.mass
        )?;
        writeln!(out, "q,R,S,node_mask")?;
        for j in 0..self.amplitude.len() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{}",
                self.grid.point(j),
                self.amplitude[j],
                self.action[j],
                u8::from(self.node_mask[j])
            )?;
        }
        Ok(())
    }
}

pub(crate) fn bridge_masked(values: &[f64], mask: &[bool]) -> Vec<f64> {
    let n = values.len();
    let mut out = values.to_vec();
    let valid: Vec<usize> = (0..n).filter(|&j| !mask[j]).collect();
    let (Some(&first), Some(&last)) = (valid.first(), valid.last()) else {
        return out;
    };
    for v in out.iter_mut().take(first) {
        *v = values[first];
    }
    for v in out.iter_mut().skip(last + 1) {
        *v = values[last];
    }
    for w in valid.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b > a + 1 {
            for (j, v) in out.iter_mut().enumerate().take(b).skip(a + 1) {
                let t = (j - a) as f64 / (b - a) as f64;
                *v = values[a] * (1.0 - t) + values[b] * t;
            }
        }
    }
    out
}

fn unwrap_step(prev: f64, raw: f64) -> f64 {
    raw + 2.0 * PI * ((prev - raw) / (2.0 * PI)).round()
}

/// Splits `psi` into amplitude and unwrapped action.
///
/// Unwrapping starts at the density maximum and proceeds outward in both
/// directions, each valid point taking the branch nearest the previous
/// valid point. Masked points carry the branch of their last valid
/// neighbour and keep their raw value for recomposition.
pub fn polar_decompose(psi: &WaveField, hbar: f64, node_threshold: f64) -> Result<PolarField> {
    let values = psi.values();
    let n = values.len();
    let amplitude: Vec<f64> = values.iter().map(|z| z.norm()).collect();
    let (anchor, &r_max) = amplitude
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid is non-empty");
    if !(node_threshold >= 0.0 && node_threshold < 1.0) || r_max == 0.0 {
        return Err(Error::AllPointsMasked(node_threshold));
    }
    let cut = node_threshold * r_max;
    let node_mask: Vec<bool> = amplitude.iter().map(|&r| r < cut).collect();

    let raw: Vec<f64> = values.iter().map(|z| z.arg()).collect();
    let mut phase = vec![0.0; n];
    phase[anchor] = raw[anchor];
    let mut last = raw[anchor];
    for j in anchor + 1..n {
        let p = unwrap_step(last, raw[j]);
        phase[j] = p;
        if !node_mask[j] {
            last = p;
        }
    }
    last = raw[anchor];
    for j in (0..anchor).rev() {
        let p = unwrap_step(last, raw[j]);
        phase[j] = p;
        if !node_mask[j] {
            last = p;
        }
    }
    let masked_values = values
        .iter()
        .zip(&node_mask)
        .map(|(z, &m)| if m { *z } else { Complex64::new(0.0, 0.0) })
        .collect();
    Ok(PolarField {
        grid: *psi.grid(),
        time: psi.time(),
        hbar,
        amplitude,
        action: phase.into_iter().map(|p| p * hbar).collect(),
        node_mask,
        masked_values,
    })
}

/// Builds a polar field directly from amplitude and action samples, with no
/// masked points.
pub fn polar_from_parts(grid: SpatialGrid, time: f64, hbar: f64, amplitude: Vec<f64>, action: Vec<f64>) -> Result<PolarField> {
    let n = grid.n_points();
    if amplitude.len() != n || action.len() != n {
        return Err(Error::GridMismatch);
    }
    if amplitude.iter().any(|r| !(*r >= 0.0)) {
        return Err(Error::InvalidParameter {
            name: "amplitude",
            reason: "must be non-negative".into(),
        });
    }
    Ok(PolarField {
        grid,
        time,
        hbar,
        amplitude,
        action,
        node_mask: vec![false; n],
        masked_values: vec![Complex64::new(0.0, 0.0); n],
    })
}

/// Inverse of [`polar_decompose`]: `R exp(iS/hbar)` off-mask, stored raw
/// values on the mask.
pub fn polar_recompose(polar: &PolarField) -> WaveField {
    let values = (0..polar.amplitude.len())
        .map(|j| {
            if polar.node_mask[j] {
                polar.masked_values[j]
            } else {
                Complex64::from_polar(polar.amplitude[j], polar.action[j] / polar.hbar)
            }
        })
        .collect();
    WaveField {
        grid: polar.grid,
        time: polar.time,
        values,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind {
    Free,
    Harmonic { omega: f64 },
    /// Rectangular barrier of the given height over `|q - center| <= width/2`.
    Barrier { height: f64, width: f64, center: f64 },
    /// Values tabulated on the grid.
    Custom(Vec<f64>),
}

/// Potential profile `V(q)` together with its values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    kind: PotentialKind,
    grid: SpatialGrid,
    mass: f64,
    values: Vec<f64>,
}

impl Potential {
    pub fn new(kind: PotentialKind, grid: &SpatialGrid, params: &PhysicalParams) -> Result<Self> {
        match &kind {
            PotentialKind::Harmonic { omega } if !(omega.is_finite() && *omega > 0.0) => {
                return Err(Error::InvalidParameter {
                    name: "omega",
                    reason: format!("must be positive, got {omega}"),
                })
            }
            PotentialKind::Barrier { height, width, center }
                if !(height.is_finite() && width.is_finite() && *width > 0.0 && center.is_finite()) =>
            {
                return Err(Error::InvalidParameter {
                    name: "barrier",
                    reason: "height and center must be finite, width positive".into(),
                })
            }
            PotentialKind::Custom(v) if v.len() != grid.n_points() => return Err(Error::GridMismatch),
            _ => {}
        }
        let mut pot = Self {
            kind,
            grid: *grid,
            mass: params.mass,
            values: Vec::new(),
        };
        pot.values = match &pot.kind {
            PotentialKind::Custom(v) => v.clone(),
            _ => grid.points().into_iter().map(|q| pot.value_at(q)).collect(),
        };
        if pot.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "potential",
                reason: "non-finite value on the grid".into(),
            });
        }
        Ok(pot)
    }

    pub fn free(grid: &SpatialGrid) -> Self {
        Self {
            kind: PotentialKind::Free,
            grid: *grid,
            mass: 1.0,
            values: vec![0.0; grid.n_points()],
        }
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `V(q)` anywhere; tabulated potentials are interpolated cubically.
    pub fn value_at(&self, q: f64) -> f64 {
        match &self.kind {
            PotentialKind::Free => 0.0,
            PotentialKind::Harmonic { omega } => 0.5 * self.mass * omega * omega * q * q,
            PotentialKind::Barrier { height, width, center } => {
                if (q - center).abs() <= 0.5 * width {
                    *height
                } else {
                    0.0
                }
            }
            PotentialKind::Custom(v) => self.grid.interpolate_cubic(v, q),
        }
    }

    /// `-dV/dq`. Barrier and tabulated profiles use a centred difference of
    /// the cubic interpolant of their grid values.
    pub fn force_at(&self, q: f64) -> f64 {
        match &self.kind {
            PotentialKind::Free => 0.0,
            PotentialKind::Harmonic { omega } => -self.mass * omega * omega * q,
            _ => {
                let h = 0.25 * self.grid.dq();
                -(self.grid.interpolate_cubic(&self.values, q + h) - self.grid.interpolate_cubic(&self.values, q - h)) / (2.0 * h)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> PhysicalParams {
        PhysicalParams::default()
    }

    #[test]
    fn grid_spacing() {
        assert_eq!(SpatialGrid::new(-10.0, 10.0, 8).unwrap().dq(), 2.5);
        assert_eq!(SpatialGrid::new(-20.0, 20.0, 1024).unwrap().dq(), 0.0390625);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(matches!(SpatialGrid::new(0.0, -1.0, 64), Err(Error::InvertedBounds { .. })));
        assert_eq!(SpatialGrid::new(0.0, 1.0, 100), Err(Error::NotPowerOfTwo(100)));
        assert_eq!(SpatialGrid::new(0.0, 1.0, 4), Err(Error::TooFewPoints(4)));
    }

    #[test]
    fn params_must_be_positive() {
        assert!(PhysicalParams::new(0.0, 1.0).is_err());
        assert!(PhysicalParams::new(1.0, -1.0).is_err());
        assert_eq!(PhysicalParams::default(), PhysicalParams::new(1.0, 1.0).unwrap());
    }

    #[test]
    fn gaussian_is_normalized_symmetric_and_real() {
        let g = SpatialGrid::new(-10.0, 10.0, 256).unwrap();
        let psi = gaussian_packet(&g, &unit(), 0.0, 1.0, 0.0).unwrap();
        assert!((psi.norm_squared() - 1.0).abs() < 1e-10);
        let v = psi.values();
        let peak = v.iter().enumerate().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm())).unwrap().0;
        assert_eq!(g.point(peak), 0.0);
        for j in 1..g.n_points() {
            assert_eq!(v[j].im, 0.0);
            assert!((v[j].re - v[g.n_points() - j].re).abs() < 1e-15);
        }
    }

    #[test]
    fn packet_must_fit() {
        let g = SpatialGrid::new(-10.0, 10.0, 256).unwrap();
        assert!(matches!(
            gaussian_packet(&g, &unit(), 6.0, 1.0, 0.0),
            Err(Error::PacketEscapesGrid { .. })
        ));
        assert!(matches!(
            two_packet_superposition(&g, &unit(), 10.0, 1.0, 0.0, 0.0),
            Err(Error::PacketEscapesGrid { .. })
        ));
    }

    #[test]
    fn two_packets_symmetric_and_separated() {
        let g = SpatialGrid::new(-20.0, 20.0, 1024).unwrap();
        let n = g.n_points();
        let psi = two_packet_superposition(&g, &unit(), 10.0, 1.0, 0.0, 0.0).unwrap();
        let rho = psi.density();
        for j in 1..n {
            assert!((rho[j] - rho[n - j]).abs() < 1e-15);
        }
        // midpoint/peak density is 4 exp(-sep^2/8): below 1e-8 once sep > 13.6
        let far = two_packet_superposition(&g, &unit(), 14.0, 1.0, 0.0, 0.0).unwrap().density();
        let peak = far.iter().cloned().fold(0.0, f64::max);
        assert!(far[n / 2] < 1e-8 * peak);
        assert!((psi.norm_squared() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn linear_phase_unwraps_to_linear_action() {
        let g = SpatialGrid::new(-20.0, 20.0, 1024).unwrap();
        let psi = gaussian_packet(&g, &unit(), 0.0, 1.0, 2.0).unwrap();
        let polar = polar_decompose(&psi, 1.0, DEFAULT_NODE_THRESHOLD).unwrap();
        let q = g.points();
        let offset = polar.action()[512] - 2.0 * q[512];
        for j in 0..g.n_points() {
            if !polar.node_mask()[j] {
                assert!((polar.action()[j] - 2.0 * q[j] - offset).abs() < 1e-9);
            }
        }
        assert!(offset.abs() < 1e-12);
    }

    #[test]
    fn real_positive_field_has_zero_action() {
        let g = SpatialGrid::new(-10.0, 10.0, 128).unwrap();
        let psi = gaussian_packet(&g, &unit(), 0.0, 1.0, 0.0).unwrap();
        let polar = polar_decompose(&psi, 1.0, DEFAULT_NODE_THRESHOLD).unwrap();
        assert!(polar.action().iter().all(|s| *s == 0.0));
    }

    #[test]
    fn unwrapped_action_differs_from_raw_by_whole_turns() {
        let g = SpatialGrid::new(-20.0, 20.0, 512).unwrap();
        let hbar = 0.7;
        let params = PhysicalParams::new(hbar, 1.0).unwrap();
        let psi = two_packet_superposition(&g, &params, 4.0, 1.0, 3.0, -1.0).unwrap();
        let polar = polar_decompose(&psi, hbar, DEFAULT_NODE_THRESHOLD).unwrap();
        for (j, z) in psi.values().iter().enumerate() {
            if polar.node_mask()[j] {
                continue;
            }
            let turns = (polar.action()[j] - hbar * z.arg()) / (2.0 * PI * hbar);
            assert!((turns - turns.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_amplitude_zero_action_recomposes_real() {
        let g = SpatialGrid::new(0.0, 1.0, 16).unwrap();
        let polar = polar_from_parts(g, 0.0, 1.0, vec![0.5; 16], vec![0.0; 16]).unwrap();
        let psi = polar_recompose(&polar);
        assert!(psi.values().iter().all(|z| *z == Complex64::new(0.5, 0.0)));
    }

    #[test]
    fn threshold_of_one_masks_everything_but_the_peak_and_above_rejects() {
        let g = SpatialGrid::new(-10.0, 10.0, 64).unwrap();
        let psi = gaussian_packet(&g, &unit(), 0.0, 1.0, 0.0).unwrap();
        assert_eq!(polar_decompose(&psi, 1.0, 1.5), Err(Error::AllPointsMasked(1.5)));
    }

    #[test]
    fn harmonic_and_barrier_values() {
        let g = SpatialGrid::new(-4.0, 4.0, 16).unwrap();
        let p = PhysicalParams::new(1.0, 2.0).unwrap();
        let h = Potential::new(PotentialKind::Harmonic { omega: 3.0 }, &g, &p).unwrap();
        assert_eq!(h.value_at(1.0), 9.0);
        assert_eq!(h.force_at(1.0), -18.0);
        let b = Potential::new(PotentialKind::Barrier { height: 2.0, width: 1.0, center: 0.0 }, &g, &p).unwrap();
        assert_eq!(b.value_at(0.4), 2.0);
        assert_eq!(b.value_at(0.6), 0.0);
        assert!(Potential::new(PotentialKind::Custom(vec![f64::NAN; 16]), &g, &p).is_err());
        assert!(Potential::new(PotentialKind::Custom(vec![0.0; 15]), &g, &p).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let g = SpatialGrid::new(-10.0, 10.0, 64).unwrap();
        let params = PhysicalParams::new(1.5, 0.5).unwrap();
        let psi = gaussian_packet(&g, &params, 1.0, 1.0, 0.5).unwrap().with_time(0.25);
        let mut buf = Vec::new();
        psi.write_csv(&params, &mut buf).unwrap();
        let (back, p2) = WaveField::read_csv(&buf[..]).unwrap();
        assert_eq!(p2, params);
        assert_eq!(back.time(), 0.25);
        assert!(back.grid().matches(psi.grid()));
        assert_eq!(back.values(), psi.values());
    }

    #[test]
    fn cubic_interpolation_exact_for_cubics() {
        let g = SpatialGrid::new(-2.0, 2.0, 32).unwrap();
        let f: Vec<f64> = g.points().iter().map(|x| x * x * x - x).collect();
        for &x in &[-1.33, 0.01, 0.77, 1.5] {
            assert!((g.interpolate_cubic(&f, x) - (x * x * x - x)).abs() < 1e-12);
        }
    }
}
