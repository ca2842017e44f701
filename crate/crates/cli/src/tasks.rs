//! Task pipelines. Each writes its artifacts into the output directory and
//! returns the metrics that decide the exit status.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::ValueEnum;
use diracbohm::bohm::{self, TrajectorySet};
use diracbohm::ensemble::{self, Binning, SamplingOptions};
use diracbohm::evolve::{self, EvolutionConfig, Method};
use diracbohm::fields::polar_decompose;
use diracbohm::picture::{self, ActionPhase};
use diracbohm::propagator;
use diracbohm::{PhysicalParams, Potential, PotentialKind, SpatialGrid, WaveField};

use crate::config::{InitialKind, RunConfig};
use crate::report::{Metric, RunReport};
use crate::svg::emit_svg_trajectories;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Evolve,
    Trajectories,
    Propagate,
    Ensemble,
    PictureCheck,
    Verify,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::Evolve,
        Task::Trajectories,
        Task::Propagate,
        Task::Ensemble,
        Task::PictureCheck,
        Task::Verify,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Task::Evolve => "evolve",
            Task::Trajectories => "trajectories",
            Task::Propagate => "propagate",
            Task::Ensemble => "ensemble",
            Task::PictureCheck => "picture-check",
            Task::Verify => "verify",
        }
    }

    pub fn summary(&self) -> &'static str {
        match self {
            Task::Evolve => "evolve the initial state; snapshots, observables, norm and energy drift",
            Task::Trajectories => "Bohm trajectories from density quantiles; crossings, equivariance, SVG",
            Task::Propagate => "time-sliced kernel chain against the exact or grid propagator",
            Task::Ensemble => "Nelson path ensemble; conditional mean velocity against the mean momentum",
            Task::PictureCheck => "conjugation by exp(iS/hbar), unitarity, classical endpoint relations",
            Task::Verify => "residuals of the Hamilton-Jacobi and continuity equations",
        }
    }
}

/// Seventeen significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    out: &'a Path,
    grid: SpatialGrid,
    params: PhysicalParams,
    pot: Potential,
    psi0: WaveField,
}

impl Ctx<'_> {
    fn create(&self, name: &str, report: &mut RunReport) -> Result<BufWriter<File>> {
        let path = self.out.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        report.artifacts.push(name.to_string());
        Ok(BufWriter::new(file))
    }

    fn evolve_all(&self, report: &mut RunReport) -> Result<Vec<WaveField>> {
        let run = evolve::evolve(&self.psi0, &self.pot, &self.cfg.evolution_config(), &self.params).context("evolution")?;
        report.warnings.extend(run.warnings);
        Ok(run.states)
    }
}

/// Runs a task and always returns a report; failures land in `error`.
pub fn run_task(task: Task, cfg: &RunConfig, out: &Path) -> RunReport {
    let start = Instant::now();
    let mut report = RunReport::new(task.name(), serde_json::to_value(cfg).expect("config serializes"));
    if let Err(e) = run_inner(task, cfg, out, &mut report) {
        report.error = Some(format!("{e:#}"));
    }
    report.finish(start.elapsed().as_secs_f64());
    report
}

fn run_inner(task: Task, cfg: &RunConfig, out: &Path, report: &mut RunReport) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let grid = cfg.spatial_grid()?;
    let params = cfg.params()?;
    let ctx = Ctx {
        cfg,
        out,
        grid,
        params,
        pot: cfg.potential(&grid, &params)?,
        psi0: cfg.initial_state(&grid, &params)?,
    };
    match task {
        Task::Evolve => run_evolve(&ctx, report),
        Task::Trajectories => run_trajectories(&ctx, report),
        Task::Propagate => run_propagate(&ctx, report),
        Task::Ensemble => run_ensemble(&ctx, report),
        Task::PictureCheck => run_picture_check(&ctx, report),
        Task::Verify => run_verify(&ctx, report),
    }
}

fn write_state(ctx: &Ctx, name: &str, psi: &WaveField, report: &mut RunReport) -> Result<()> {
    let mut w = ctx.create(name, report)?;
    psi.write_csv(&ctx.params, &mut w)?;
    w.flush()?;
    Ok(())
}

fn run_evolve(ctx: &Ctx, report: &mut RunReport) -> Result<()> {
    let every = ctx.cfg.evolution.snapshot_every;
    let cfg = EvolutionConfig {
        record_every: every,
        ..ctx.cfg.evolution_config()
    };
    let run = evolve::evolve(&ctx.psi0, &ctx.pot, &cfg, &ctx.params).context("evolution")?;
    report.warnings.extend(run.warnings.iter().cloned());
    let mut obs = ctx.create("observables.csv", report)?;
    writeln!(obs, "t,norm,q_mean,p_mean,width,energy")?;
    for (k, s) in run.states.iter().enumerate() {
        writeln!(
            obs,
            "{},{},{},{},{},{}",
            fmt17(s.time()),
            fmt17(s.norm_squared()),
            fmt17(evolve::expectation_q(s)),
            fmt17(evolve::expectation_p(s, &ctx.params)),
            fmt17(evolve::width(s)),
            fmt17(evolve::energy(s, &ctx.pot, &ctx.params))
        )?;
        write_state(ctx, &format!("psi_{:06}.csv", k * every), s, report)?;
    }
    obs.flush()?;
    report.push(Metric::below("norm_drift", run.norm_drift, 1e-8));
    // Crank-Nicolson conserves its finite-difference energy, not the
    // spectral one measured here.
    if cfg.method == Method::SplitOperator {
        report.push(Metric::below("energy_drift", run.energy_drift, 1e-8));
    } else {
        report.push(Metric::info("energy_drift", run.energy_drift));
    }
    let last = run.states.last().expect("initial state is kept");
    match (ctx.cfg.initial.kind, ctx.pot.kind()) {
        (InitialKind::Gaussian, PotentialKind::Free) => {
            let i = &ctx.cfg.initial;
            let exact = dispersing_gaussian(&ctx.grid, &ctx.params, i.center, i.width, i.p0, last.time());
            report.push(Metric::below("l2_error_vs_dispersing_gaussian", last.l2_distance(&exact)?, 1e-6));
        }
        (InitialKind::Coherent, PotentialKind::Harmonic { omega }) => {
            let a = ctx.cfg.initial.displacement;
            let worst = run
                .states
                .iter()
                .map(|s| (evolve::expectation_q(s) - a * (omega * s.time()).cos()).abs())
                .fold(0.0, f64::max);
            report.push(Metric::below("max_center_error_vs_a_cos_wt", worst, 1e-6));
        }
        _ => {}
    }
    Ok(())
}

/// Closed-form free Gaussian, `|psi|^2` of initial standard deviation `sigma`.
pub fn dispersing_gaussian(grid: &SpatialGrid, params: &PhysicalParams, center: f64, sigma: f64, p0: f64, t: f64) -> WaveField {
    use diracbohm::Complex64;
    let (hbar, m) = (params.hbar, params.mass);
    let spread = Complex64::new(1.0, hbar * t / (2.0 * m * sigma * sigma));
    let pre = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-0.25) / spread.sqrt();
    let values = grid
        .points()
        .into_iter()
        .map(|q| {
            let x = q - center - p0 * t / m;
            let arg = -x * x / (4.0 * sigma * sigma) / spread + Complex64::i() * (p0 * q / hbar - p0 * p0 * t / (2.0 * m * hbar));
            pre * arg.exp()
        })
        .collect();
    WaveField::new(*grid, t, values).expect("grid length")
}

fn write_trajectories(ctx: &Ctx, name: &str, set: &TrajectorySet, every: usize, report: &mut RunReport) -> Result<()> {
    let mut w = ctx.create(name, report)?;
    write!(w, "t")?;
    for i in 0..set.n_trajectories() {
        write!(w, ",traj_{i}")?;
    }
    writeln!(w)?;
    for k in (0..set.times.len()).step_by(every) {
        write!(w, "{}", fmt17(set.times[k]))?;
        for i in 0..set.n_trajectories() {
            write!(w, ",{}", fmt17(set.positions[[i, k]]))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn thin<T: Clone>(items: &[T], every: usize) -> Vec<T> {
    items.iter().step_by(every).cloned().collect()
}

fn run_trajectories(ctx: &Ctx, report: &mut RunReport) -> Result<()> {
    let tc = &ctx.cfg.trajectories;
    let states = ctx.evolve_all(report)?;
    let seeds = bohm::quantile_seeds(&ctx.psi0, tc.n_seeds);
    let set = bohm::integrate_trajectories(&states, &seeds, &ctx.params, tc.node_threshold)?;
    write_trajectories(ctx, "trajectories.csv", &set, tc.output_every, report)?;
    let shown = TrajectorySet {
        times: thin(&set.times, tc.output_every),
        positions: set.positions.slice(ndarray::s![.., ..;tc.output_every]).to_owned(),
        seeds: set.seeds.clone(),
        frozen_at: set.frozen_at.clone(),
    };
    let mut svg = ctx.create("trajectories.svg", report)?;
    svg.write_all(emit_svg_trajectories(&shown, &thin(&states, tc.output_every)).as_bytes())?;
    svg.flush()?;
    report.push(Metric::equals("crossings", bohm::count_crossings(&set) as f64, 0.0));
    report.push(Metric::info("frozen", set.frozen_at.iter().filter(|f| f.is_some()).count() as f64));
    let worst_l1 = (0..set.times.len())
        .step_by(tc.output_every)
        .map(|k| bohm::histogram_l1(&set.positions_at(k), &states[k], tc.hist_cells))
        .fold(0.0, f64::max);
    // too few seeds cannot resolve the histogram bins
    if tc.n_seeds >= 1000 {
        report.push(Metric::below("max_histogram_l1", worst_l1, 0.05));
    } else {
        report.push(Metric::info("max_histogram_l1", worst_l1));
    }
    Ok(())
}

fn run_propagate(ctx: &Ctx, report: &mut RunReport) -> Result<()> {
    let pc = &ctx.cfg.propagate;
    let window = ctx.cfg.window().map_err(anyhow::Error::msg)?;
    let kernel = propagator::build_kernel(&ctx.grid, pc.epsilon, &ctx.pot, &ctx.params, window)?;
    report.push(Metric::info("unitarity_defect", kernel.unitarity_defect()));
    report.push(Metric::info("initial_norm_defect", kernel.norm_defect(&ctx.psi0)?));
    let chain = propagator::apply_repeated(&kernel, &ctx.psi0, pc.n_slices)?;
    for (k, s) in chain.iter().enumerate().step_by(pc.snapshot_every) {
        write_state(ctx, &format!("kernel_psi_{k:06}.csv"), s, report)?;
    }
    let last = chain.last().expect("chain holds the initial state");
    write_state(ctx, "kernel_psi_final.csv", last, report)?;
    let t = pc.epsilon * pc.n_slices as f64;
    let free = matches!(ctx.pot.kind(), PotentialKind::Free);
    if free {
        let exact = propagator::exact_free_kernel(&ctx.grid, t, &ctx.params)?.apply(&ctx.psi0)?;
        report.push(Metric::below("l2_error_vs_exact_free_kernel", last.l2_distance(&exact)?, 1e-3));
    }
    let dt = ctx.cfg.evolution.dt;
    let steps = (t / dt).round() as usize;
    if steps >= 1 && ((steps as f64) * dt - t).abs() < 1e-9 * t.max(1.0) {
        let cfg = EvolutionConfig {
            n_steps: steps,
            record_every: steps,
            ..ctx.cfg.evolution_config()
        };
        let grid_run = evolve::evolve(&ctx.psi0, &ctx.pot, &cfg, &ctx.params)?;
        let d = last.l2_distance(grid_run.states.last().expect("final state"))?;
        if free {
            report.push(Metric::below("l2_difference_vs_evolve", d, 1e-3));
        } else {
            report.push(Metric::info("l2_difference_vs_evolve", d));
        }
    } else {
        report.warnings.push(format!("evolution.dt = {dt} does not divide the chain duration {t}; grid comparison skipped"));
    }
    Ok(())
}

fn run_ensemble(ctx: &Ctx, report: &mut RunReport) -> Result<()> {
    let ec = &ctx.cfg.ensemble;
    let states = ctx.evolve_all(report)?;
    let options = SamplingOptions {
        record_every: ec.record_every,
        ..Default::default()
    };
    let ens = ensemble::sample_paths(&states, ec.n_paths, ctx.cfg.seed, &ctx.params, &options)?;
    report.push(Metric::info("escaped_paths", ens.n_escaped() as f64));
    let bins = Binning::cells(&ctx.grid, ec.bin_cells)?;
    let threshold = ctx.cfg.trajectories.node_threshold;
    for &t in &ec.times {
        let k = (t / ens.dt).round() as usize;
        let state = &states[k * ec.record_every];
        let stats = ensemble::conditional_mean_velocity(&ens, k, &bins)?;
        let (current, _) = ensemble::moyal_current(state, &ctx.params, threshold);
        let reference = ensemble::binned_reference_velocity(state, &current, &bins, &ctx.params);
        let mut w = ctx.create(&format!("conditional_t{k:05}.csv"), report)?;
        writeln!(w, "bin_center,count,mean_velocity,std_error,reference_velocity,z,forward_velocity,backward_velocity")?;
        let mut worst_z: f64 = 0.0;
        let mut compared = 0;
        for b in 0..bins.n_bins {
            let r = reference[b].unwrap_or(f64::NAN);
            let z = (stats.mean_velocity[b] - r) / stats.std_error[b];
            if stats.counts[b] >= ec.min_count && z.is_finite() {
                worst_z = worst_z.max(z.abs());
                compared += 1;
            }
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                fmt17(stats.bin_centers[b]),
                stats.counts[b],
                fmt17(stats.mean_velocity[b]),
                fmt17(stats.std_error[b]),
                fmt17(r),
                fmt17(z),
                fmt17(stats.forward_velocity[b]),
                fmt17(stats.backward_velocity[b])
            )?;
        }
        w.flush()?;
        report.push(Metric::info(format!("bins_compared_t{k}"), compared as f64));
        report.push(Metric::below(format!("max_abs_z_t{k}"), worst_z, ec.z_limit));
        let l1 = bohm::histogram_l1(&ens.live_positions_at(k), state, ec.bin_cells);
        // sampling noise alone exceeds 0.05 below about 1e5 paths
        if ec.n_paths >= 100_000 {
            report.push(Metric::below(format!("histogram_l1_t{k}"), l1, 0.05));
        } else {
            report.push(Metric::info(format!("histogram_l1_t{k}"), l1));
        }
    }
    if ec.path_stride > 0 {
        let mut w = ctx.create("paths.csv", report)?;
        let picked: Vec<usize> = (0..ens.n_paths).step_by(ec.path_stride).collect();
        write!(w, "t")?;
        for i in &picked {
            write!(w, ",path_{i}")?;
        }
        writeln!(w)?;
        for (k, t) in ens.times.iter().enumerate() {
            write!(w, "{}", fmt17(*t))?;
            for &i in &picked {
                write!(w, ",{}", fmt17(ens.positions[[i, k]]))?;
            }
            writeln!(w)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn run_picture_check(ctx: &Ctx, report: &mut RunReport) -> Result<()> {
    let vc = &ctx.cfg.verify;
    let threshold = ctx.cfg.trajectories.node_threshold;
    let states = ctx.evolve_all(report)?;
    let last = states.last().expect("final state");
    let polar = polar_decompose(last, ctx.params.hbar, threshold)?;
    let phases = [
        ("own_action", ActionPhase::from_polar(&polar)),
        ("free_action", ActionPhase::free_classical(&ctx.grid, 0.0, 1.0, &ctx.params)),
    ];
    for (label, phase) in &phases {
        for c in picture::conjugation_checks(last, phase, &ctx.params)? {
            report.push(Metric::below(
                format!("conjugation_{}_{label}", c.observable.name()),
                c.abs_error,
                vc.conjugation_tol,
            ));
        }
        let (norm_change, roundtrip) = picture::unitarity_error(last, phase, &ctx.params)?;
        report.push(Metric::below(format!("unitarity_norm_{label}"), norm_change, vc.unitarity_tol));
        report.push(Metric::below(format!("unitarity_roundtrip_{label}"), roundtrip, vc.unitarity_tol));
    }
    // classical endpoint relations at a few phase-space points
    let t = 1.0;
    let mut worst_p: f64 = 0.0;
    let mut worst_pf: f64 = 0.0;
    for &(q, p) in &[(-1.0, 0.5), (0.0, 1.0), (0.7, -0.3)] {
        let rel = picture::endpoint_relations(&ctx.pot, q, p, t, &ctx.params, 1e-5)?;
        worst_p = worst_p.max((rel.ds_dq + p).abs());
        worst_pf = worst_pf.max((rel.ds_dq_final - rel.endpoints.p_final).abs());
    }
    report.push(Metric::below("endpoint_p_plus_dS_dq", worst_p, 1e-6));
    report.push(Metric::below("endpoint_pfinal_minus_dS_dqfinal", worst_pf, 1e-6));
    let seeds = bohm::quantile_seeds(&ctx.psi0, 20);
    let dt = ctx.cfg.evolution.dt;
    let n = ctx.cfg.evolution.n_steps;
    let (set, momenta) = picture::classical_limit_trajectories(&ctx.psi0, &seeds, &ctx.pot, &ctx.params, dt, n, threshold)?;
    let mut worst: f64 = 0.0;
    for (i, (&q0, &p0)) in seeds.iter().zip(&momenta).enumerate() {
        let end = picture::classical_endpoints(&ctx.pot, q0, p0, n as f64 * dt, &ctx.params)?;
        worst = worst.max((set.positions[[i, n]] - end.q_final).abs());
    }
    report.push(Metric::below("classical_limit_vs_endpoints", worst, 1e-6));
    Ok(())
}

fn run_verify(ctx: &Ctx, report: &mut RunReport) -> Result<()> {
    let vc = &ctx.cfg.verify;
    let threshold = ctx.cfg.trajectories.node_threshold;
    let states = ctx.evolve_all(report)?;
    let mut w = ctx.create("residuals.csv", report)?;
    writeln!(w, "t,qhj_l2,qhj_max,continuity_l2,continuity_max")?;
    let (mut qhj, mut cont): (f64, f64) = (0.0, 0.0);
    for k in (0..states.len() - 1).step_by(vc.sample_every) {
        let split = picture::split_real_imaginary(&states[k..k + 2], &ctx.pot, &ctx.params, threshold)?;
        let (q, c) = (&split.qhj[0], &split.continuity[0]);
        writeln!(w, "{},{},{},{},{}", fmt17(q.time), fmt17(q.l2), fmt17(q.max_abs), fmt17(c.l2), fmt17(c.max_abs))?;
        qhj = qhj.max(q.l2);
        cont = cont.max(c.l2);
    }
    w.flush()?;
    report.push(Metric::below("qhj_residual", qhj, vc.qhj_tol));
    report.push(Metric::below("continuity_residual", cont, vc.continuity_tol));
    Ok(())
}
