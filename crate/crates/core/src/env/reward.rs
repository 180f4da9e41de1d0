//! Composite reward: survival, velocity tracking, heading tracking, action
//! magnitude and action rate, combined by a fixed weight vector.

use serde::{Deserialize, Serialize};

use super::command::CommandState;
use crate::dynamics::BikeState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub surv: f64,
    pub vel: f64,
    pub steer: f64,
    pub act: f64,
    pub rate: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            surv: 1.0,
            vel: 3.0,
            steer: 5.0,
            act: 1.0,
            rate: 2.0,
        }
    }
}

/// What the steering-tracking term compares against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteerTarget {
    /// Heading error `psi_desired - psi`.
    #[default]
    Heading,
    /// Steering-angle error `delta_cmd - delta`.
    Steering,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    pub weights: RewardWeights,
    /// Velocity sensitivity, per m/s.
    pub alpha: f64,
    /// Steering sensitivity, per degree.
    pub beta: f64,
    #[serde(default)]
    pub steer_target: SteerTarget,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            weights: RewardWeights::default(),
            alpha: 0.25,
            beta: 0.1,
            steer_target: SteerTarget::Heading,
        }
    }
}

/// Unweighted reward components of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardTerms {
    pub surv: f64,
    pub vel: f64,
    pub steer: f64,
    pub act: f64,
    pub rate: f64,
}

impl RewardTerms {
    pub fn weighted_total(&self, w: &RewardWeights) -> f64 {
        w.surv * self.surv
            + w.vel * self.vel
            + w.steer * self.steer
            + w.act * self.act
            + w.rate * self.rate
    }

    pub fn weighted(&self, w: &RewardWeights) -> RewardTerms {
        RewardTerms {
            surv: w.surv * self.surv,
            vel: w.vel * self.vel,
            steer: w.steer * self.steer,
            act: w.act * self.act,
            rate: w.rate * self.rate,
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.surv, self.vel, self.steer, self.act, self.rate]
    }

    pub fn add_assign(&mut self, other: &RewardTerms) {
        self.surv += other.surv;
        self.vel += other.vel;
        self.steer += other.steer;
        self.act += other.act;
        self.rate += other.rate;
    }
}

pub const TERM_NAMES: [&str; 5] = ["surv", "vel", "steer", "act", "rate"];

/// Total reward and its components. Actions must already be clamped.
pub fn compute_reward(
    s: &BikeState<f64>,
    _s_prev: &BikeState<f64>,
    action: &[f64; 2],
    prev_action: &[f64; 2],
    c: &CommandState,
    cfg: &RewardConfig,
) -> (f64, RewardTerms) {
    let tracking_err_deg = match cfg.steer_target {
        SteerTarget::Heading => c.heading_error(s.psi).to_degrees(),
        SteerTarget::Steering => (c.delta_cmd - s.delta).to_degrees(),
    };
    let d0 = action[0] - prev_action[0];
    let d1 = action[1] - prev_action[1];
    let terms = RewardTerms {
        surv: 1.0,
        vel: (-cfg.alpha * (s.v - c.v_cmd).abs()).exp(),
        steer: (-cfg.beta * tracking_err_deg.abs()).exp(),
        act: -(action[0].abs() + action[1].abs()),
        rate: -(d0 * d0 + d1 * d1).sqrt(),
    };
    (terms.weighted_total(&cfg.weights), terms)
}

/// Tight bounds of the total reward with clamped actions and non-negative
/// weights: `[surv + act*(-2) + rate*(-2 sqrt 2), surv + vel + steer]`.
pub fn reward_bounds(w: &RewardWeights) -> (f64, f64) {
    (
        w.surv - 2.0 * w.act - 2.0 * std::f64::consts::SQRT_2 * w.rate,
        w.surv + w.vel + w.steer,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at_rest(v: f64) -> BikeState<f64> {
        BikeState::upright(v)
    }

    #[test]
    fn perfect_tracking_yields_nine() {
        let s = at_rest(2.0);
        let c = CommandState::fixed(2.0, 0.0);
        let (total, t) = compute_reward(&s, &s, &[0.0; 2], &[0.0; 2], &c, &RewardConfig::default());
        assert_eq!(t.as_array(), [1.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(total, 9.0);
    }

    #[test]
    fn velocity_error_of_four() {
        let s = at_rest(5.0);
        let c = CommandState::fixed(1.0, 0.0);
        let (_, t) = compute_reward(&s, &s, &[0.0; 2], &[0.0; 2], &c, &RewardConfig::default());
        assert!((t.vel - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn action_norms() {
        let s = at_rest(2.0);
        let c = CommandState::fixed(2.0, 0.0);
        let (_, t) = compute_reward(
            &s,
            &s,
            &[1.0, -1.0],
            &[0.0, 0.0],
            &c,
            &RewardConfig::default(),
        );
        assert_eq!(t.act, -2.0);
        assert!((t.rate + 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn heading_error_in_degrees() {
        let mut s = at_rest(2.0);
        s.psi = -10f64.to_radians();
        let c = CommandState::fixed(2.0, 0.0);
        let (_, t) = compute_reward(&s, &s, &[0.0; 2], &[0.0; 2], &c, &RewardConfig::default());
        assert!((t.steer - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn steering_target_mode() {
        let mut s = at_rest(2.0);
        s.delta = 0.05;
        let c = CommandState::fixed(2.0, 0.05);
        let cfg = RewardConfig {
            steer_target: SteerTarget::Steering,
            ..RewardConfig::default()
        };
        s.psi = 1.0;
        let (_, t) = compute_reward(&s, &s, &[0.0; 2], &[0.0; 2], &c, &cfg);
        assert_eq!(t.steer, 1.0);
    }

    #[test]
    fn bound_values() {
        let (lo, hi) = reward_bounds(&RewardWeights::default());
        assert_eq!(hi, 9.0);
        assert!((lo - (-1.0 - 4.0 * 2f64.sqrt())).abs() < 1e-12);
    }
}
