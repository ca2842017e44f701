use diracbohm::bohm::{amplitude_mask, histogram_l1, local_momentum};
use diracbohm::ensemble::*;
use diracbohm::evolve::{evolve, EvolutionConfig};
use diracbohm::fields::*;
use diracbohm::{Complex64, PhysicalParams, Potential, PotentialKind, SpatialGrid, WaveField};

const THR: f64 = DEFAULT_NODE_THRESHOLD;

fn params() -> PhysicalParams {
    PhysicalParams::default()
}

fn free_run(g: &SpatialGrid, psi: &WaveField, dt: f64, n_steps: usize) -> Vec<WaveField> {
    let cfg = EvolutionConfig { dt, n_steps, ..Default::default() };
    evolve(psi, &Potential::free(g), &cfg, &params()).unwrap().states
}

#[test]
fn momentum_representation_basics() {
    let p = params();
    let g = SpatialGrid::new(-20.0, 20.0, 1024).unwrap();
    let psi = superposition(
        &g,
        &p,
        &[
            GaussianComponent { center: -2.0, width: 0.8, p0: 2.0, weight: Complex64::new(1.0, 0.0) },
            GaussianComponent { center: 3.0, width: 1.2, p0: -1.0, weight: Complex64::new(0.0, 0.6) },
        ],
    )
    .unwrap();
    let rep = to_momentum_rep(&psi, &p);
    assert!((rep.norm_squared() - psi.norm_squared()).abs() < 1e-10);
    assert!(from_momentum_rep(&rep).l2_distance(&psi).unwrap() < 1e-12);

    let boosted = to_momentum_rep(&gaussian_packet(&g, &p, 0.0, 1.0, 2.0).unwrap(), &p);
    let dens = boosted.density();
    let peak = (0..dens.len()).max_by(|&a, &b| dens[a].total_cmp(&dens[b])).unwrap();
    assert!((boosted.p_grid[peak] - 2.0).abs() <= boosted.dp());
}

#[test]
fn moyal_momentum_of_counter_propagating_packets_is_antisymmetric() {
    let p = params();
    let g = SpatialGrid::new(-20.0, 20.0, 512).unwrap();
    let psi = two_packet_superposition(&g, &p, 6.0, 1.0, 1.5, -1.5).unwrap();
    let field = moyal_mean_momentum(&psi, &p, THR);
    let local = local_momentum(&psi, &p, THR);
    let n = g.n_points();
    let strong = amplitude_mask(&psi, 1e-3);
    // midpoint is q = 0 = point(n/2); mirror of j is n - j
    for j in (1..n).filter(|&j| strong[j] && field.valid[j]) {
        assert!((field.momentum[j] + field.momentum[n - j]).abs() < 1e-8, "j={j}");
        assert!((field.momentum[j] - local.momentum[j]).abs() < 1e-8);
    }
}

#[test]
fn free_ensemble_mean_follows_ehrenfest() {
    let p = params();
    let g = SpatialGrid::new(-10.0, 20.0, 1024).unwrap();
    let psi = gaussian_packet(&g, &p, 0.0, 1.0, 3.0).unwrap();
    let states = free_run(&g, &psi, 1e-3, 2000);
    let ens = sample_paths(&states, 10_000, 7, &p, &SamplingOptions { record_every: 100, ..Default::default() }).unwrap();
    for k in 0..ens.times.len() {
        let x = ens.positions_at(k);
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let t = ens.times[k];
        assert!((mean - 3.0 * t).abs() < 3.0 * (var / n).sqrt(), "t={t} mean={mean}");
        assert!(histogram_l1(&x, &states[k * 100], 8) < 0.05);
    }
}

#[test]
fn ground_state_ensemble_stays_in_equilibrium() {
    let p = params();
    let g = SpatialGrid::new(-8.0, 8.0, 256).unwrap();
    let pot = Potential::new(PotentialKind::Harmonic { omega: 1.0 }, &g, &p).unwrap();
    let psi = gaussian_packet(&g, &p, 0.0, 0.5f64.sqrt(), 0.0).unwrap();
    let cfg = EvolutionConfig { dt: 1e-3, n_steps: 5000, ..Default::default() };
    let states = evolve(&psi, &pot, &cfg, &p).unwrap().states;
    let ens = sample_paths(&states, 2000, 11, &p, &SamplingOptions { record_every: 250, ..Default::default() }).unwrap();
    let pooled: Vec<f64> = (0..ens.times.len()).flat_map(|k| ens.positions_at(k)).collect();
    assert!(histogram_l1(&pooled, &psi, 8) < 0.05);
}

#[test]
fn uniform_flow_is_recovered_in_every_bin() {
    let p = params();
    let g = SpatialGrid::new(-10.0, 20.0, 1024).unwrap();
    let psi = gaussian_packet(&g, &p, 0.0, 1.0, 2.0).unwrap();
    let states = free_run(&g, &psi, 1e-3, 1000);
    let ens = sample_paths(&states, 20_000, 3, &p, &SamplingOptions { record_every: 10, ..Default::default() }).unwrap();
    let bins = Binning::cells(&g, 4).unwrap();
    for k in [10, 50, 90] {
        let stats = conditional_mean_velocity(&ens, k, &bins).unwrap();
        for b in 0..bins.n_bins {
            if stats.counts[b] >= 200 {
                let z = (stats.mean_velocity[b] - 2.0) / stats.std_error[b];
                assert!(z.abs() < 4.0, "k={k} bin={b} z={z}");
            }
        }
    }
}

#[test]
fn standard_error_shrinks_as_inverse_root_n() {
    let p = params();
    let g = SpatialGrid::new(-10.0, 10.0, 256).unwrap();
    let psi = gaussian_packet(&g, &p, 0.0, 1.0, 1.0).unwrap();
    let states = free_run(&g, &psi, 1e-3, 300);
    let bins = Binning::new(-1.0, 0.5, 4).unwrap();
    let err = |n: usize| {
        let ens = sample_paths(&states, n, 5, &p, &SamplingOptions { record_every: 10, ..Default::default() }).unwrap();
        let stats = conditional_mean_velocity(&ens, 15, &bins).unwrap();
        stats.std_error.iter().sum::<f64>() / bins.n_bins as f64
    };
    let (e3, e4, e5) = (err(1_000), err(10_000), err(100_000));
    for r in [e3 / e4, e4 / e5] {
        assert!((2.6..3.8).contains(&r), "ratio {r}");
    }
}

#[test]
fn ensembles_do_not_depend_on_thread_count() {
    let p = params();
    let g = SpatialGrid::new(-10.0, 10.0, 256).unwrap();
    let psi = two_packet_superposition(&g, &p, 4.0, 1.0, 1.0, -1.0).unwrap();
    let states = free_run(&g, &psi, 1e-3, 200);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| sample_paths(&states, 500, 99, &p, &SamplingOptions::default()).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a, b);
    let other = sample_paths(&states, 500, 100, &p, &SamplingOptions::default()).unwrap();
    assert_ne!(a.positions, other.positions);
}
