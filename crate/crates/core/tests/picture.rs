mod common;

use std::f64::consts::FRAC_PI_2;

use common::*;
use diracbohm::bohm::momentum_density;
use diracbohm::evolve::{evolve, EvolutionConfig};
use diracbohm::fields::*;
use diracbohm::picture::*;
use diracbohm::{PhysicalParams, Potential, PotentialKind, SpatialGrid};

const THR: f64 = DEFAULT_NODE_THRESHOLD;

fn params() -> PhysicalParams {
    PhysicalParams::default()
}

#[test]
fn removing_the_phase_of_a_superposition_leaves_its_amplitude() {
    let p = params();
    let g = SpatialGrid::new(-20.0, 20.0, 1024).unwrap();
    let psi = two_packet_superposition(&g, &p, 5.0, 1.0, 1.0, -2.0).unwrap();
    let polar = polar_decompose(&psi, p.hbar, THR).unwrap();
    let phase = ActionPhase::from_polar(&polar);
    assert_eq!(phase.source, PhaseSource::FromState);
    assert_eq!(phase.action, polar.action());
    let down = apply_v(&psi, &phase, Direction::Adjoint, &p).unwrap();
    for (j, z) in down.values().iter().enumerate() {
        if !polar.node_mask()[j] {
            assert!(z.im.abs() < 1e-14 && (z.re - polar.amplitude()[j]).abs() < 1e-14, "j={j}");
        }
    }
    let zero = ActionPhase::from_fn(&g, 0.0, |_| 0.0, |_| 0.0);
    assert_eq!(apply_v(&psi, &zero, Direction::Forward, &p).unwrap().values(), psi.values());
}

#[test]
fn transformed_momentum_on_amplitude_gives_bohm_density() {
    let p = params();
    let g = SpatialGrid::new(-20.0, 20.0, 1024).unwrap();
    let psi = gaussian_packet(&g, &p, 0.0, 1.0, 1.7).unwrap();
    let polar = polar_decompose(&psi, p.hbar, THR).unwrap();
    let phase = ActionPhase::from_polar(&polar);
    let r = apply_v(&psi, &phase, Direction::Adjoint, &p).unwrap();
    let pr = transformed_momentum(&r, &phase, &p).unwrap();
    let j_bohm = momentum_density(&psi, &p);
    for j in 0..g.n_points() {
        let amp = polar.amplitude()[j];
        if amp > 1e-3 {
            // Re(p_D R) = R dS/dq = hbar Im(psi* psi') / R
            assert!((pr.values()[j].re - j_bohm[j] / amp).abs() < 1e-8, "j={j}");
        }
    }
}

#[test]
fn linear_action_leaves_expectations_unchanged() {
    let p = params();
    let g = SpatialGrid::new(-20.0, 20.0, 1024).unwrap();
    let psi = gaussian_packet(&g, &p, 1.0, 0.9, -0.5).unwrap();
    let phase = ActionPhase::from_fn(&g, 0.0, |q| 1.3 * q, |_| 1.3);
    for c in conjugation_checks(&psi, &phase, &p).unwrap() {
        assert!(c.abs_error < 1e-10, "{}: {:e}", c.observable.name(), c.abs_error);
    }
    let down = apply_v(&psi, &phase, Direction::Adjoint, &p).unwrap();
    assert!((momentum_expectation(&down, &p) - (-0.5 - 1.3)).abs() < 1e-10);
}

#[test]
fn split_residuals_on_coherent_and_stationary_runs() {
    let p = params();
    let g = SpatialGrid::new(-10.0, 10.0, 1024).unwrap();
    let pot = Potential::new(PotentialKind::Harmonic { omega: 1.0 }, &g, &p).unwrap();
    let cfg = EvolutionConfig { dt: 1e-3, n_steps: 200, record_every: 1, ..Default::default() };
    let coherent = evolve(&coherent_state(&g, &p, 1.0, 2.0, 0.0), &pot, &cfg, &p).unwrap().states;
    let split = split_real_imaginary(&coherent[..50], &pot, &p, THR).unwrap();
    assert_eq!(split.qhj.len(), 49);
    assert!(split.max_qhj_l2() < 1e-4 && split.max_continuity_l2() < 1e-4);

    let ground = gaussian_packet(&g, &p, 0.0, 0.5f64.sqrt(), 0.0).unwrap();
    let stationary = evolve(&ground, &pot, &cfg, &p).unwrap().states;
    let split = split_real_imaginary(&stationary[..20], &pot, &p, THR).unwrap();
    assert!(split.continuity.iter().all(|r| r.max_abs < 1e-8));
}

#[test]
fn classical_endpoint_examples() {
    let p = params();
    let g = SpatialGrid::new(-10.0, 10.0, 256).unwrap();
    let free = Potential::free(&g);
    let e = classical_endpoints(&free, 0.0, 2.0, 1.0, &p).unwrap();
    assert!((e.q_final - 2.0).abs() < 1e-14 && (e.action - 2.0).abs() < 1e-14);

    let harmonic = Potential::new(PotentialKind::Harmonic { omega: 1.0 }, &g, &p).unwrap();
    let e = classical_endpoints(&harmonic, 1.0, 0.0, FRAC_PI_2, &p).unwrap();
    assert!(e.q_final.abs() < 1e-12 && (e.p_final + 1.0).abs() < 1e-12);

    for pot in [&free, &harmonic] {
        let r = endpoint_relations(pot, 0.4, 1.1, 1.2, &p, 1e-4).unwrap();
        assert!((r.ds_dq + r.endpoints.p).abs() < 1e-6);
        assert!((r.ds_dq_final - r.endpoints.p_final).abs() < 1e-6);
        assert!((r.ds_dt + r.energy).abs() < 1e-6);
    }
}

#[test]
fn tabulated_potential_uses_the_numerical_route() {
    let p = params();
    let g = SpatialGrid::new(-10.0, 10.0, 2048).unwrap();
    let quartic: Vec<f64> = g.points().iter().map(|q| 0.5 * q * q + 0.05 * q.powi(4)).collect();
    let pot = Potential::new(PotentialKind::Custom(quartic), &g, &p).unwrap();
    let r = endpoint_relations(&pot, 0.5, 0.8, 1.0, &p, 1e-4).unwrap();
    let energy_final = 0.5 * r.endpoints.p_final.powi(2) + pot.value_at(r.endpoints.q_final);
    assert!((energy_final - r.energy).abs() < 1e-5);
    assert!((r.ds_dq + r.endpoints.p).abs() < 1e-5);
    assert!((r.ds_dq_final - r.endpoints.p_final).abs() < 1e-5);
}
