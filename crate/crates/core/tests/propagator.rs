mod common;

use common::*;
use diracbohm::evolve::{evolve, EvolutionConfig};
use diracbohm::fields::*;
use diracbohm::propagator::*;
use diracbohm::{PhysicalParams, Potential, PotentialKind, SpatialGrid};

fn params() -> PhysicalParams {
    PhysicalParams::default()
}

#[test]
fn short_time_action_values() {
    let p = params();
    let g = SpatialGrid::new(-10.0, 10.0, 256).unwrap();
    let free = Potential::free(&g);
    let harmonic = Potential::new(PotentialKind::Harmonic { omega: 1.0 }, &g, &p).unwrap();
    assert_eq!(short_time_action(0.0, 1.0, 0.5, &free, &p), 1.0);
    assert!((short_time_action(0.0, 0.1, 0.01, &harmonic, &p) - 0.4999875).abs() < 1e-12);
    assert!((short_time_action(1.2, 1.2, 0.3, &harmonic, &p) + 0.3 * 0.5 * 1.44).abs() < 1e-14);

    assert_eq!(momentum_tas(0.0, 1.0, 0.5, &free, &p), (2.0, 2.0));
    assert_eq!(momentum_tas(0.7, 0.7, 0.5, &free, &p), (0.0, 0.0));

    let s = midpoint_momentum(0.0, 1.0, 0.5, &p);
    assert_eq!((s.p_backward, s.p_forward, s.current_momentum), (1.0, 1.0, 1.0));
    assert_eq!(2.0 * s.current_momentum, momentum_tas(0.0, 1.0, 0.5, &free, &p).0);
    let z = midpoint_momentum(0.4, 0.4, 0.1, &p);
    assert_eq!((z.p_backward, z.p_forward, z.current_momentum), (0.0, 0.0, 0.0));
}

#[test]
fn single_free_slice_on_broad_gaussian() {
    let p = params();
    let g = SpatialGrid::new(-15.0, 15.0, 4096).unwrap();
    let psi = gaussian_packet(&g, &p, 0.0, 2.0, 0.0).unwrap();
    let k = build_kernel(&g, 0.01, &Potential::free(&g), &p, KernelWindow::default()).unwrap();
    let err = k.apply(&psi).unwrap().l2_distance(&dispersing_gaussian(&g, &p, 0.0, 2.0, 0.0, 0.01)).unwrap();
    assert!(err < 1e-6, "{err:e}");
}

#[test]
fn free_kernels_form_a_semigroup() {
    let p = params();
    let g = SpatialGrid::new(-10.0, 10.0, 1024).unwrap();
    let psi = gaussian_packet(&g, &p, 0.5, 1.0, 1.0).unwrap();
    let free = Potential::free(&g);
    let k1 = build_kernel(&g, 0.01, &free, &p, KernelWindow::default()).unwrap();
    let k2 = build_kernel(&g, 0.02, &free, &p, KernelWindow::default()).unwrap();
    let twice = k1.apply(&k1.apply(&psi).unwrap()).unwrap();
    let once = k2.apply(&psi).unwrap();
    assert!(twice.l2_distance(&once).unwrap() < 1e-4);

    let composed = compose_chain(&[k1.clone(), k1.clone()]).unwrap();
    assert!(composed.apply(&psi).unwrap().l2_distance(&twice).unwrap() < 1e-12);
    let single = compose_chain(std::slice::from_ref(&k1)).unwrap();
    assert_eq!(single.values, k1.values);
}

#[test]
fn hundred_slices_match_exact_propagator_and_evolve() {
    let p = params();
    let g = SpatialGrid::new(-10.0, 10.0, 2048).unwrap();
    let psi = gaussian_packet(&g, &p, 0.0, 1.0, 0.0).unwrap();
    let free = Potential::free(&g);
    let k = build_kernel(&g, 0.01, &free, &p, KernelWindow::default()).unwrap();
    let sliced = apply_repeated(&k, &psi, 100).unwrap().pop().unwrap();
    assert!((sliced.time() - 1.0).abs() < 1e-12);

    let exact = exact_free_kernel(&g, 1.0, &p).unwrap().apply(&psi).unwrap();
    assert!(sliced.l2_distance(&exact).unwrap() < 1e-3);

    let cfg = EvolutionConfig { dt: 1e-3, n_steps: 1000, record_every: 1000, ..Default::default() };
    let grid_run = evolve(&psi, &free, &cfg, &p).unwrap().states.pop().unwrap();
    assert!(sliced.l2_distance(&grid_run).unwrap() < 1e-3);
}

#[test]
fn harmonic_chain_matches_mehler_kernel_at_quarter_period() {
    let p = params();
    let g = SpatialGrid::new(-10.0, 10.0, 1024).unwrap();
    let pot = Potential::new(PotentialKind::Harmonic { omega: 1.0 }, &g, &p).unwrap();
    let psi = gaussian_packet(&g, &p, 1.0, 0.8, 0.5).unwrap();
    let t = std::f64::consts::FRAC_PI_2;
    let n = 100;
    let k = build_kernel(&g, t / n as f64, &pot, &p, KernelWindow::default()).unwrap();
    let sliced = apply_repeated(&k, &psi, n).unwrap().pop().unwrap();
    let oracle = apply_kernel(&psi, t, |qf, q| mehler_kernel(qf, q, t, 1.0, &p));
    let err = sliced.l2_distance(&oracle).unwrap();
    assert!(err < 1e-2, "{err:e}");
}

#[test]
fn kernel_below_grid_resolution_is_rejected() {
    let p = params();
    let g = SpatialGrid::new(-10.0, 10.0, 64).unwrap();
    let r = build_kernel(&g, 1e-4, &Potential::free(&g), &p, KernelWindow::default());
    assert!(matches!(r, Err(diracbohm::Error::UnresolvableKernel { .. })));
}
