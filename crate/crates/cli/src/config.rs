//! Run configuration: a TOML document with fixed sections. Every field has
//! a default, and the parsed config is echoed back with all defaults filled in.

use std::collections::HashMap;
use std::fmt;

use diracbohm::evolve::{Boundary, EvolutionConfig, Method};
use diracbohm::fields::{GaussianComponent, PotentialKind, DEFAULT_NODE_THRESHOLD};
use diracbohm::propagator::KernelWindow;
use diracbohm::{Complex64, PhysicalParams, Potential, SpatialGrid, WaveField};
use serde::{Deserialize, Serialize};

use crate::tasks::Task;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: String,
    pub grid: GridSection,
    pub physics: PhysicsSection,
    pub initial: InitialSection,
    pub potential: PotentialSection,
    pub evolution: EvolutionSection,
    pub trajectories: TrajectoriesSection,
    pub propagate: PropagateSection,
    pub ensemble: EnsembleSection,
    pub verify: VerifySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: "out".into(),
            grid: GridSection::default(),
            physics: PhysicsSection::default(),
            initial: InitialSection::default(),
            potential: PotentialSection::default(),
            evolution: EvolutionSection::default(),
            trajectories: TrajectoriesSection::default(),
            propagate: PropagateSection::default(),
            ensemble: EnsembleSection::default(),
            verify: VerifySection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub q_min: f64,
    pub q_max: f64,
    pub n_points: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            q_min: -20.0,
            q_max: 20.0,
            n_points: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSection {
    pub hbar: f64,
    pub mass: f64,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        Self { hbar: 1.0, mass: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub center: f64,
    pub width: f64,
    #[serde(default)]
    pub p0: f64,
    #[serde(default = "one")]
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Gaussian,
    TwoPacket,
    Coherent,
    Superposition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    pub kind: InitialKind,
    pub center: f64,
    pub width: f64,
    pub p0: f64,
    /// two_packet
    pub sep: f64,
    pub p0a: f64,
    pub p0b: f64,
    /// coherent: displaced oscillator ground state; uses `potential.omega`
    pub displacement: f64,
    pub components: Vec<ComponentSpec>,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            kind: InitialKind::Gaussian,
            center: 0.0,
            width: 1.0,
            p0: 0.0,
            sep: 6.0,
            p0a: 2.0,
            p0b: -2.0,
            displacement: 2.0,
            components: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialName {
    Free,
    Harmonic,
    Barrier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialSection {
    pub kind: PotentialName,
    pub omega: f64,
    pub height: f64,
    pub width: f64,
    pub center: f64,
}

impl Default for PotentialSection {
    fn default() -> Self {
        Self {
            kind: PotentialName::Free,
            omega: 1.0,
            height: 1.0,
            width: 1.0,
            center: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionSection {
    pub dt: f64,
    pub n_steps: usize,
    pub method: String,
    pub boundary: String,
    /// Snapshot files are written every `snapshot_every` steps.
    pub snapshot_every: usize,
}

impl Default for EvolutionSection {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            n_steps: 1000,
            method: "split_operator".into(),
            boundary: "periodic".into(),
            snapshot_every: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoriesSection {
    pub n_seeds: usize,
    pub node_threshold: f64,
    /// Grid cells per bin of the equivariance histogram.
    pub hist_cells: usize,
    /// Time stride of the written trajectory table.
    pub output_every: usize,
}

impl Default for TrajectoriesSection {
    fn default() -> Self {
        Self {
            n_seeds: 100,
            node_threshold: DEFAULT_NODE_THRESHOLD,
            hist_cells: 4,
            output_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagateSection {
    pub epsilon: f64,
    pub n_slices: usize,
    pub window: String,
    pub taper_start: f64,
    pub taper_end: f64,
    pub band_factor: f64,
    pub snapshot_every: usize,
}

impl Default for PropagateSection {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            n_slices: 100,
            window: "tapered".into(),
            taper_start: 0.35,
            taper_end: 0.9,
            band_factor: 8.0,
            snapshot_every: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub n_paths: usize,
    /// Grid cells per conditional-statistics bin.
    pub bin_cells: usize,
    /// Times at which conditional statistics are reported.
    pub times: Vec<f64>,
    /// Recorded-state stride of the path mesh.
    pub record_every: usize,
    pub min_count: usize,
    /// Write every `path_stride`-th path to the path CSV; 0 writes none.
    pub path_stride: usize,
    pub z_limit: f64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            bin_cells: 4,
            times: vec![0.5],
            record_every: 10,
            min_count: 200,
            path_stride: 100,
            z_limit: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub qhj_tol: f64,
    pub continuity_tol: f64,
    /// Residuals are checked on the step starting at every `sample_every`-th state.
    pub sample_every: usize,
    pub conjugation_tol: f64,
    pub unitarity_tol: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            qhj_tol: 1e-4,
            continuity_tol: 1e-4,
            sample_every: 100,
            conjugation_tol: 1e-10,
            unitarity_tol: 1e-14,
        }
    }
}

/// Line of every `key =` assignment, keyed by its dotted path.
fn key_lines(text: &str) -> Result<HashMap<String, usize>, ConfigError> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut table = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.starts_with("[[") {
            // array-of-tables entries legitimately repeat keys
            table = format!("{}#{line_no}", line.trim_matches(|c| c == '[' || c == ']').trim());
            continue;
        }
        if line.starts_with('[') {
            let name = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            let header = format!("[{name}]");
            if let Some(prev) = seen.insert(header, line_no) {
                return Err(ConfigError {
                    line: Some(line_no),
                    message: format!("duplicate table [{name}] (lines {prev} and {line_no})"),
                });
            }
            table = name;
            continue;
        }
        let Some((key, _)) = line.split_once('=') else { continue };
        let key = key.trim().trim_matches('"');
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.') {
            continue;
        }
        let path = if table.is_empty() { key.to_string() } else { format!("{table}.{key}") };
        if let Some(prev) = seen.insert(path.clone(), line_no) {
            return Err(ConfigError {
                line: Some(line_no),
                message: format!("duplicate key `{path}` (lines {prev} and {line_no})"),
            });
        }
    }
    Ok(seen)
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_with(text, |cfg| cfg.validate())
}

/// `parse_config` plus the checks specific to `task`.
pub fn parse_config_for(text: &str, task: Task) -> Result<RunConfig, ConfigError> {
    parse_with(text, |cfg| {
        cfg.validate()?;
        cfg.validate_for(task)
    })
}

fn parse_with(text: &str, check: impl Fn(&RunConfig) -> Result<(), Invalid>) -> Result<RunConfig, ConfigError> {
    let lines = key_lines(text)?;
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError {
        line: e.span().map(|s| line_of_offset(text, s.start)),
        message: e.message().to_string(),
    })?;
    check(&cfg).map_err(|(key, message)| ConfigError {
        line: lines.get(key).copied(),
        message: format!("{key}: {message}"),
    })?;
    Ok(cfg)
}

pub type Invalid = (&'static str, String);

fn positive(key: &'static str, v: f64) -> Result<(), Invalid> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err((key, format!("must be positive, got {v}")))
    }
}

fn at_least_one(key: &'static str, v: usize) -> Result<(), Invalid> {
    if v >= 1 {
        Ok(())
    } else {
        Err((key, "must be at least 1".into()))
    }
}

impl RunConfig {
    /// Checks every section and builds the core objects once, so that a
    /// config that validates can always be run.
    pub fn validate(&self) -> Result<(), Invalid> {
        let g = &self.grid;
        if !g.n_points.is_power_of_two() {
            return Err(("grid.n_points", diracbohm::Error::NotPowerOfTwo(g.n_points).to_string()));
        }
        let grid = self.spatial_grid().map_err(|e| ("grid", e.to_string()))?;
        let params = self.params().map_err(|e| ("physics", e.to_string()))?;
        self.potential(&grid, &params).map_err(|e| ("potential", e.to_string()))?;
        self.initial_state(&grid, &params).map_err(|e| ("initial", e.to_string()))?;
        let ev = &self.evolution;
        positive("evolution.dt", ev.dt)?;
        at_least_one("evolution.n_steps", ev.n_steps)?;
        at_least_one("evolution.snapshot_every", ev.snapshot_every)?;
        self.method().map_err(|m| ("evolution.method", m))?;
        self.boundary().map_err(|m| ("evolution.boundary", m))?;
        let tr = &self.trajectories;
        at_least_one("trajectories.n_seeds", tr.n_seeds)?;
        at_least_one("trajectories.hist_cells", tr.hist_cells)?;
        at_least_one("trajectories.output_every", tr.output_every)?;
        if !(tr.node_threshold >= 0.0 && tr.node_threshold < 1.0) {
            return Err(("trajectories.node_threshold", format!("must lie in [0, 1), got {}", tr.node_threshold)));
        }
        let pr = &self.propagate;
        positive("propagate.epsilon", pr.epsilon)?;
        at_least_one("propagate.n_slices", pr.n_slices)?;
        at_least_one("propagate.snapshot_every", pr.snapshot_every)?;
        self.window().map_err(|m| ("propagate.window", m))?;
        let en = &self.ensemble;
        at_least_one("ensemble.n_paths", en.n_paths)?;
        at_least_one("ensemble.bin_cells", en.bin_cells)?;
        at_least_one("ensemble.record_every", en.record_every)?;
        positive("ensemble.z_limit", en.z_limit)?;
        let v = &self.verify;
        positive("verify.qhj_tol", v.qhj_tol)?;
        positive("verify.continuity_tol", v.continuity_tol)?;
        positive("verify.conjugation_tol", v.conjugation_tol)?;
        positive("verify.unitarity_tol", v.unitarity_tol)?;
        at_least_one("verify.sample_every", v.sample_every)?;
        Ok(())
    }

    /// Checks that only matter for one task, such as ensemble times
    /// against the length of the run.
    pub fn validate_for(&self, task: Task) -> Result<(), Invalid> {
        if task == Task::Ensemble {
            let (ev, en) = (&self.evolution, &self.ensemble);
            let t_end = ev.dt * ev.n_steps as f64;
            let stride = ev.dt * en.record_every as f64;
            for &t in &en.times {
                if !(t >= stride && t <= t_end - stride) {
                    return Err((
                        "ensemble.times",
                        format!("time {t} needs a recorded neighbour on each side within [0, {t_end}]"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn spatial_grid(&self) -> diracbohm::Result<SpatialGrid> {
        SpatialGrid::new(self.grid.q_min, self.grid.q_max, self.grid.n_points)
    }

    pub fn params(&self) -> diracbohm::Result<PhysicalParams> {
        PhysicalParams::new(self.physics.hbar, self.physics.mass)
    }

    pub fn potential_kind(&self) -> PotentialKind {
        let p = &self.potential;
        match p.kind {
            PotentialName::Free => PotentialKind::Free,
            PotentialName::Harmonic => PotentialKind::Harmonic { omega: p.omega },
            PotentialName::Barrier => PotentialKind::Barrier {
                height: p.height,
                width: p.width,
                center: p.center,
            },
        }
    }

    pub fn potential(&self, grid: &SpatialGrid, params: &PhysicalParams) -> diracbohm::Result<Potential> {
        Potential::new(self.potential_kind(), grid, params)
    }

    pub fn initial_state(&self, grid: &SpatialGrid, params: &PhysicalParams) -> diracbohm::Result<WaveField> {
        use diracbohm::fields::{gaussian_packet, superposition, two_packet_superposition};
        let i = &self.initial;
        match i.kind {
            InitialKind::Gaussian => gaussian_packet(grid, params, i.center, i.width, i.p0),
            InitialKind::TwoPacket => two_packet_superposition(grid, params, i.sep, i.width, i.p0a, i.p0b),
            InitialKind::Coherent => {
                let omega = match self.potential.kind {
                    PotentialName::Harmonic => self.potential.omega,
                    _ => {
                        return Err(diracbohm::Error::InvalidParameter {
                            name: "initial.kind",
                            reason: "a coherent state needs a harmonic potential".into(),
                        })
                    }
                };
                let width = (params.hbar / (2.0 * params.mass * omega)).sqrt();
                gaussian_packet(grid, params, i.displacement, width, 0.0)
            }
            InitialKind::Superposition => {
                let comps: Vec<GaussianComponent> = i
                    .components
                    .iter()
                    .map(|c| GaussianComponent {
                        center: c.center,
                        width: c.width,
                        p0: c.p0,
                        weight: Complex64::new(c.re, c.im),
                    })
                    .collect();
                superposition(grid, params, &comps)
            }
        }
    }

    pub fn method(&self) -> Result<Method, String> {
        match self.evolution.method.as_str() {
            "split_operator" => Ok(Method::SplitOperator),
            "crank_nicolson" => Ok(Method::CrankNicolson),
            other => Err(format!("unknown method `{other}` (split_operator, crank_nicolson)")),
        }
    }

    pub fn boundary(&self) -> Result<Boundary, String> {
        match self.evolution.boundary.as_str() {
            "periodic" => Ok(Boundary::Periodic),
            "hard_wall" => Ok(Boundary::HardWall),
            other => Err(format!("unknown boundary `{other}` (periodic, hard_wall)")),
        }
    }

    pub fn window(&self) -> Result<KernelWindow, String> {
        let p = &self.propagate;
        match p.window.as_str() {
            "full" => Ok(KernelWindow::Full),
            "band" => Ok(KernelWindow::Band { width_factor: p.band_factor }),
            "tapered" => {
                if 0.0 < p.taper_start && p.taper_start < p.taper_end && p.taper_end <= 1.0 {
                    Ok(KernelWindow::Tapered {
                        start: p.taper_start,
                        end: p.taper_end,
                    })
                } else {
                    Err(format!("need 0 < taper_start < taper_end <= 1, got {} and {}", p.taper_start, p.taper_end))
                }
            }
            other => Err(format!("unknown window `{other}` (full, band, tapered)")),
        }
    }

    pub fn evolution_config(&self) -> EvolutionConfig {
        EvolutionConfig {
            dt: self.evolution.dt,
            n_steps: self.evolution.n_steps,
            method: self.method().expect("validated"),
            boundary: self.boundary().expect("validated"),
            record_every: 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_materializes_defaults() {
        let cfg = parse_config("[initial]\nkind = \"gaussian\"\np0 = 1.0\n").unwrap();
        assert_eq!(cfg.physics.hbar, 1.0);
        assert_eq!(cfg.physics.mass, 1.0);
        assert_eq!(cfg.evolution.dt, 1e-3);
        let echo = serde_json::to_value(&cfg).unwrap();
        assert_eq!(echo["physics"]["hbar"], 1.0);
        assert_eq!(echo["evolution"]["dt"], 1e-3);
        assert_eq!(echo["grid"]["n_points"], 1024);
    }

    #[test]
    fn rejects_non_power_of_two() {
        let err = parse_config("[grid]\nn_points = 100\n").unwrap_err();
        assert_eq!(err.line, Some(2));
        assert!(err.message.contains("power of two"), "{err}");
    }

    #[test]
    fn duplicate_key_reports_both_lines() {
        let err = parse_config("[grid]\nn_points = 512\nq_min = -5.0\nn_points = 256\n").unwrap_err();
        assert!(err.message.contains("lines 2 and 4"), "{err}");
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config("[physics]\nhbar = 1.0\nplanck = 2.0\n").unwrap_err();
        assert!(err.message.contains("planck"), "{err}");
        assert_eq!(err.line, Some(3));
    }

    #[test]
    fn validation_errors_point_at_the_key() {
        let err = parse_config("seed = 1\n[evolution]\ndt = -1.0\n").unwrap_err();
        assert_eq!(err.line, Some(3));
        let err = parse_config("[initial]\nkind = \"coherent\"\n").unwrap_err();
        assert!(err.message.contains("harmonic"), "{err}");
    }

    #[test]
    fn ensemble_times_are_checked_only_for_the_ensemble_task() {
        let text = "[evolution]\nn_steps = 100\n[ensemble]\ntimes = [0.5]\n";
        assert!(parse_config_for(text, Task::Evolve).is_ok());
        let err = parse_config_for(text, Task::Ensemble).unwrap_err();
        assert_eq!(err.line, Some(4));
    }

    #[test]
    fn array_of_tables_may_repeat_keys() {
        let text = "[initial]\nkind = \"superposition\"\n[[initial.components]]\ncenter = -2.0\nwidth = 1.0\n[[initial.components]]\ncenter = 2.0\nwidth = 1.0\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.initial.components.len(), 2);
    }
}
