use diracbohm::bohm::{amplitude_mask, local_momentum};
use diracbohm::ensemble::*;
use diracbohm::fields::*;
use diracbohm::picture::*;
use diracbohm::propagator::*;
use diracbohm::{Complex64, PhysicalParams, Potential, PotentialKind, SpatialGrid, WaveField};
use proptest::prelude::*;

fn component() -> impl Strategy<Value = GaussianComponent> {
    (-5.0..5.0f64, 0.7..1.5f64, -3.0..3.0f64, 0.3..1.0f64, 0.0..std::f64::consts::TAU).prop_map(|(c, w, p0, a, ph)| {
        GaussianComponent {
            center: c,
            width: w,
            p0,
            weight: Complex64::from_polar(a, ph),
        }
    })
}

fn state(comps: &[GaussianComponent]) -> WaveField {
    let g = SpatialGrid::new(-20.0, 20.0, 512).unwrap();
    superposition(&g, &PhysicalParams::default(), comps).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn polar_round_trip(comps in prop::collection::vec(component(), 1..=5)) {
        let psi = state(&comps);
        let polar = polar_decompose(&psi, 1.0, DEFAULT_NODE_THRESHOLD).unwrap();
        let back = polar_recompose(&polar);
        let err = back.values().iter().zip(psi.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-10, "{err:e}");
    }

    #[test]
    fn parseval_and_inverse(comps in prop::collection::vec(component(), 1..=5)) {
        let p = PhysicalParams::default();
        let psi = state(&comps);
        let rep = to_momentum_rep(&psi, &p);
        prop_assert!((rep.norm_squared() - psi.norm_squared()).abs() < 1e-10);
        prop_assert!(from_momentum_rep(&rep).l2_distance(&psi).unwrap() < 1e-12);
    }

    #[test]
    fn moyal_forms_agree(comps in prop::collection::vec(component(), 1..=5)) {
        let p = PhysicalParams::default();
        let psi = state(&comps);
        let double = moyal_mean_momentum(&psi, &p, DEFAULT_NODE_THRESHOLD);
        let point = moyal_point_momentum(&psi, &p, DEFAULT_NODE_THRESHOLD);
        let local = local_momentum(&psi, &p, DEFAULT_NODE_THRESHOLD);
        let strong = amplitude_mask(&psi, 1e-3);
        let scale = (0..strong.len()).filter(|&j| strong[j]).map(|j| local.momentum[j].abs()).fold(1e-300, f64::max);
        for j in (0..strong.len()).filter(|&j| strong[j] && double.valid[j]) {
            prop_assert!((double.momentum[j] - point.momentum[j]).abs() / scale < 1e-6);
            prop_assert!((point.momentum[j] - local.momentum[j]).abs() / scale < 1e-6);
        }
    }

    #[test]
    fn conjugation_by_any_action_is_unitary(
        comps in prop::collection::vec(component(), 1..=3),
        a in -2.0..2.0f64,
        b in -1.0..1.0f64,
        c in -0.1..0.1f64,
    ) {
        let p = PhysicalParams::default();
        let psi = state(&comps);
        let phase = ActionPhase::from_fn(psi.grid(), 0.0, |q| a * q + b * q * q + c * q * q * q, |q| a + 2.0 * b * q + 3.0 * c * q * q);
        let (norm_change, roundtrip) = unitarity_error(&psi, &phase, &p).unwrap();
        prop_assert!(norm_change < 1e-14 && roundtrip < 1e-14);
    }

    #[test]
    fn short_time_action_gradients(q in -4.0..4.0f64, qf in -4.0..4.0f64, eps in 0.01..0.5f64, omega in 0.2..2.0f64) {
        let p = PhysicalParams::default();
        let g = SpatialGrid::new(-10.0, 10.0, 64).unwrap();
        let pot = Potential::new(PotentialKind::Harmonic { omega }, &g, &p).unwrap();
        let (pe, pf) = momentum_tas(q, qf, eps, &pot, &p);
        let h = 1e-5;
        let s = |x: f64, y: f64| short_time_action(x, y, eps, &pot, &p);
        let dq = (s(q + h, qf) - s(q - h, qf)) / (2.0 * h);
        let dqf = (s(q, qf + h) - s(q, qf - h)) / (2.0 * h);
        prop_assert!((pe + dq).abs() / pe.abs().max(1.0) < 1e-8);
        prop_assert!((pf - dqf).abs() / pf.abs().max(1.0) < 1e-8);
    }

    #[test]
    fn midpoint_slopes(q in -4.0..4.0f64, qf in -4.0..4.0f64, eps in 0.01..0.5f64) {
        let p = PhysicalParams::default();
        let s = midpoint_momentum(q, qf, eps, &p);
        let pe = p.mass * (qf - q) / eps;
        let tol = 1e-12 * pe.abs().max(1.0);
        prop_assert!((s.slope_sum - pe).abs() < tol);
        prop_assert!((2.0 * s.current_momentum - pe).abs() < tol);
        prop_assert!(s.slope_difference.abs() < tol);
    }
}
