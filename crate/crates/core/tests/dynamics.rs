//! Simulator oracles: equilibrium, linear growth, mirror symmetry, determinism.

mod common;

use bikelab_core::dynamics::{
    actuator_step, step_control, ActuatorCommand, ActuatorModel, BikeState, DisturbanceConfig,
    PhysicalParams,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn upright_equilibrium_is_invariant() {
    common::dynamics_equilibrium().unwrap();
}

#[test]
fn small_lean_grows_like_cosh() {
    common::dynamics_growth().unwrap();
}

#[test]
fn mirrored_trajectories_agree() {
    common::dynamics_mirror().unwrap();
}

#[test]
fn seeded_noise_is_bitwise_reproducible() {
    common::dynamics_determinism().unwrap();
}

#[test]
fn finer_integration_converges() {
    // Same 0.5 s interval at 1, 2, 4, ... substeps; differences shrink.
    let p = PhysicalParams::nominal();
    let act = ActuatorModel::default();
    let s0 = BikeState {
        phi: 0.05,
        ..BikeState::upright(3.0)
    };
    let cmd = ActuatorCommand {
        delta_target: 0.1,
        v_target: 3.0,
    };
    let run = |k: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = s0;
        for _ in 0..25 {
            s = step_control(&s, &cmd, &p, &DisturbanceConfig::none(), &act, 0.02, k, &mut rng);
        }
        s.phi
    };
    let phis: Vec<f64> = [1, 2, 4, 8, 16].iter().map(|&k| run(k)).collect();
    let diffs: Vec<f64> = phis.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    assert!(diffs.windows(2).all(|d| d[1] < d[0]), "{diffs:?}");
}

proptest! {
    #[test]
    fn mirror_symmetry_holds(seed in 0u64..10_000) {
        prop_assert!(common::mirror_error(seed, 200) <= 1e-9);
    }

    #[test]
    fn quiet_state_stays_finite_and_in_envelope(
        phi in -0.7f64..0.7, phi_dot in -3.0f64..3.0, delta in -0.6f64..0.6,
        v in 0.0f64..6.0, dt_target in -2.0f64..2.0, vt in -1.0f64..10.0,
    ) {
        let s = BikeState { phi, phi_dot, delta, ..BikeState::upright(v) };
        let c = ActuatorCommand { delta_target: dt_target, v_target: vt };
        let n = common::single_step(&s, &c, 0);
        prop_assert!(n.is_finite());
        prop_assert!(n.delta.abs() <= 0.61 + 1e-12);
        prop_assert!(n.v >= 0.0);
        prop_assert!((n.delta - delta).abs() <= 7.0 * 0.02 + 1e-12);
    }

    #[test]
    fn planar_speed_matches_v(v in 0.0f64..6.0, psi in -3.1f64..3.1, delta in -0.6f64..0.6) {
        let s = BikeState { psi, delta, ..BikeState::upright(v) };
        let (_, xd, yd) = bikelab_core::dynamics::kinematics_rates(&s, &PhysicalParams::nominal());
        prop_assert!((xd * xd + yd * yd - v * v).abs() <= 1e-9 * (1.0 + v * v));
    }

    #[test]
    fn actuator_holds_its_fixed_point(delta in -0.6f64..0.6, v in 0.0f64..6.0) {
        let s = BikeState { delta, ..BikeState::upright(v) };
        let c = ActuatorCommand { delta_target: delta, v_target: v };
        let (d, dd, vn) = actuator_step(&s, &c, &PhysicalParams::nominal(), &ActuatorModel::default(), 0.02);
        prop_assert_eq!((d, dd, vn), (delta, 0.0, v));
    }
}
