use rand::Rng;
use serde::{Deserialize, Serialize};

use super::randomization::RandomizationSpec;
use crate::scalar::wrap_angle;

/// Operator-level targets the policy is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandState {
    /// m/s
    pub v_cmd: f64,
    /// rad
    pub delta_cmd: f64,
    /// Absolute episode time of the next resample, s.
    pub next_resample_t: f64,
    /// Reference heading integrated from the commanded yaw rate, rad.
    pub psi_desired: f64,
}

impl CommandState {
    pub fn fixed(v_cmd: f64, delta_cmd: f64) -> Self {
        Self {
            v_cmd,
            delta_cmd,
            next_resample_t: f64::INFINITY,
            psi_desired: 0.0,
        }
    }

    /// Wrapped heading error `psi_desired - psi`.
    pub fn heading_error(&self, psi: f64) -> f64 {
        wrap_angle(self.psi_desired - psi)
    }
}

/// Draws the first command of an episode starting at `t`.
pub fn initial_commands<R: Rng + ?Sized>(
    spec: &RandomizationSpec,
    t: f64,
    psi: f64,
    rng: &mut R,
) -> CommandState {
    let (v_cmd, delta_cmd, interval) = spec.sample_command(rng);
    CommandState {
        v_cmd,
        delta_cmd,
        next_resample_t: t + interval,
        psi_desired: psi,
    }
}

/// Holds commands until `next_resample_t`, then draws a fresh set.
///
/// Returns whether a resample happened.
pub fn resample_commands<R: Rng + ?Sized>(
    c: &mut CommandState,
    t: f64,
    spec: &RandomizationSpec,
    rng: &mut R,
) -> bool {
    if t < c.next_resample_t {
        return false;
    }
    let (v_cmd, delta_cmd, interval) = spec.sample_command(rng);
    c.v_cmd = v_cmd;
    c.delta_cmd = delta_cmd;
    c.next_resample_t = t + interval;
    true
}

/// Integrates the reference heading with the kinematic yaw rate implied by the
/// current commands.
pub fn advance_reference(c: &mut CommandState, wheelbase: f64, dt: f64) {
    let rate = c.v_cmd / wheelbase * c.delta_cmd.tan();
    c.psi_desired = wrap_angle(c.psi_desired + rate * dt);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn holds_before_resample_time() {
        let spec = RandomizationSpec::full();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut c = initial_commands(&spec, 0.0, 0.0, &mut rng);
        let before = c;
        let t = c.next_resample_t - 1e-9;
        assert!(!resample_commands(&mut c, t, &spec, &mut rng));
        assert_eq!(c, before);
    }

    #[test]
    fn resampled_values_stay_in_range() {
        let spec = RandomizationSpec::full();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut c = initial_commands(&spec, 0.0, 0.0, &mut rng);
        let mut t = 0.0;
        for _ in 0..10_000 {
            t = c.next_resample_t;
            assert!(resample_commands(&mut c, t, &spec, &mut rng));
            assert!((1.0..=5.0).contains(&c.v_cmd));
            assert!(c.delta_cmd.abs() <= 10f64.to_radians());
            let interval = c.next_resample_t - t;
            assert!((3.0 - 1e-9..=5.0 + 1e-9).contains(&interval));
        }
        assert!(t > 0.0);
    }

    #[test]
    fn straight_command_keeps_reference_heading() {
        let mut c = CommandState::fixed(3.0, 0.0);
        c.psi_desired = 0.4;
        for _ in 0..500 {
            advance_reference(&mut c, 1.1, 0.02);
        }
        assert_eq!(c.psi_desired, 0.4);
    }

    #[test]
    fn reference_turns_with_steering_command() {
        let mut c = CommandState::fixed(2.2, 0.1);
        advance_reference(&mut c, 1.1, 0.5);
        assert!((c.psi_desired - 2.0 * 0.1f64.tan() * 0.5).abs() < 1e-12);
    }
}
