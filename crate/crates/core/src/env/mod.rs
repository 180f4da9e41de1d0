//! The balance-and-track MDP over one or many simulated bicycles.

pub mod batch;
pub mod command;
pub mod randomization;
pub mod reward;
mod sim;

use std::f64::consts::{FRAC_PI_4, PI};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    ActuatorCommand, ActuatorModel, BikeState, DisturbanceConfig, PhysicalParams,
};
use crate::error::Result;
use command::CommandState;
use randomization::RandomizationSpec;
use reward::{RewardConfig, RewardTerms};

pub use batch::BatchEnv;
pub use sim::{reset_sample, BikeEnv, EpisodeStart};

pub const OBS_DIM: usize = 8;
pub const ACT_DIM: usize = 2;

/// Per-channel maximum magnitudes scaling the observation noise for
/// `[phi, phi_dot, delta, delta_dot, v, heading error]`. Commands are never noised.
pub const OBS_NOISE_SCALE: [f64; 6] = [0.785, 3.0, 0.61, 7.0, 6.0, PI];

/// `[phi, phi_dot, delta, delta_dot, v, e_psi, v_cmd, delta_cmd]`
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn phi(&self) -> f64 {
        self.0[0]
    }
    pub fn phi_dot(&self) -> f64 {
        self.0[1]
    }
    pub fn delta(&self) -> f64 {
        self.0[2]
    }
    pub fn v(&self) -> f64 {
        self.0[4]
    }
    pub fn heading_error(&self) -> f64 {
        self.0[5]
    }
    pub fn v_cmd(&self) -> f64 {
        self.0[6]
    }
    pub fn delta_cmd(&self) -> f64 {
        self.0[7]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

/// Normalized policy output, two channels in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action(pub [f64; ACT_DIM]);

impl Action {
    pub fn clamped(&self) -> Action {
        Action(
            self.0
                .map(|a| if a.is_nan() { 0.0 } else { a.clamp(-1.0, 1.0) }),
        )
    }

    /// `a0 -> a0 * delta_max`, `a1 -> (a1 + 1) / 2 * v_max`.
    pub fn to_command(&self, act: &ActuatorModel<f64>) -> ActuatorCommand<f64> {
        let a = self.clamped().0;
        ActuatorCommand {
            delta_target: a[0] * act.delta_max,
            v_target: 0.5 * (a[1] + 1.0) * act.v_max,
        }
    }

    /// Inverse of [`Action::to_command`], clamped to the unit box.
    pub fn from_targets(delta_target: f64, v_target: f64, act: &ActuatorModel<f64>) -> Action {
        Action([
            delta_target / act.delta_max,
            2.0 * v_target / act.v_max - 1.0,
        ])
        .clamped()
    }
}

/// Builds an observation, adding `N(0, (rho * s_max)^2)` to the six state
/// channels. Six normal variates are drawn on every call.
pub fn observe<R: Rng + ?Sized>(
    s: &BikeState<f64>,
    c: &CommandState,
    p: &PhysicalParams<f64>,
    rng: &mut R,
) -> Observation {
    let clean = [
        s.phi,
        s.phi_dot,
        s.delta,
        s.delta_dot,
        s.v,
        c.heading_error(s.psi),
    ];
    let rho = p.obs_noise_frac;
    let mut obs = [0.0; OBS_DIM];
    for (i, (&value, &scale)) in clean.iter().zip(OBS_NOISE_SCALE.iter()).enumerate() {
        let z: f64 = rng.sample(StandardNormal);
        obs[i] = if rho > 0.0 {
            value + rho * scale * z
        } else {
            value
        };
    }
    obs[5] = crate::scalar::wrap_angle(obs[5]);
    obs[6] = c.v_cmd;
    obs[7] = c.delta_cmd;
    Observation(obs)
}

/// `(terminated, truncated)` after `step_idx` steps of an episode.
pub fn check_termination(s: &BikeState<f64>, step_idx: u32, cfg: &EnvConfig) -> (bool, bool) {
    (
        s.phi.abs() > cfg.termination_roll,
        step_idx >= cfg.max_episode_steps,
    )
}

/// Everything that defines one environment instance apart from its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    /// Control period, s.
    pub control_dt: f64,
    /// Integration steps per control period.
    pub substeps: usize,
    pub max_episode_steps: u32,
    /// Safety termination bound on |phi|, rad.
    pub termination_roll: f64,
    /// Probability that an observation frame is lost and the previous one held.
    pub dropout_rate: f64,
    pub base_params: PhysicalParams<f64>,
    pub disturbance: DisturbanceConfig<f64>,
    pub actuator: ActuatorModel<f64>,
    pub reward: RewardConfig,
    pub randomization: RandomizationSpec,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            control_dt: 0.02,
            substeps: 1,
            max_episode_steps: 3200,
            termination_roll: FRAC_PI_4,
            dropout_rate: 0.0,
            base_params: PhysicalParams::nominal(),
            disturbance: DisturbanceConfig::none(),
            actuator: ActuatorModel::default(),
            reward: RewardConfig::default(),
            randomization: RandomizationSpec::full(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        use crate::error::Error;
        if !(self.control_dt > 0.0 && self.control_dt / self.substeps.max(1) as f64 <= 0.05) {
            return Err(Error::Config(
                "integration step must lie in (0, 0.05] s".into(),
            ));
        }
        if self.substeps == 0 || self.max_episode_steps == 0 {
            return Err(Error::Config(
                "substeps and max_episode_steps must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config("dropout_rate must lie in [0, 1)".into()));
        }
        self.base_params.validate()?;
        self.disturbance.validate()?;
        self.randomization.validate()
    }
}

/// Diagnostics attached to a step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepInfo {
    /// Observation of the terminal state when the environment auto-reset.
    pub final_obs: Option<Observation>,
    /// Summary of an episode that ended on this step.
    pub episode: Option<EpisodeSummary>,
    pub commands_resampled: bool,
    pub dropped_frame: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpisodeSummary {
    pub length: u32,
    pub total_reward: f64,
    /// Weighted per-component sums over the episode.
    pub terms: RewardTerms,
    pub fell: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub reward_terms: RewardTerms,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noiseless_observation_is_exact() {
        let s = BikeState {
            phi: 0.123,
            phi_dot: -0.2,
            delta: 0.05,
            delta_dot: 0.3,
            ..BikeState::upright(2.5)
        };
        let c = CommandState::fixed(3.0, 0.1);
        let p = PhysicalParams::nominal();
        let o = observe(&s, &c, &p, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(o.0, [0.123, -0.2, 0.05, 0.3, 2.5, 0.0, 3.0, 0.1]);
    }

    #[test]
    fn noise_std_matches_scale() {
        let s = BikeState::upright(2.0);
        let c = CommandState::fixed(3.0, 0.1);
        let p = PhysicalParams {
            obs_noise_frac: 0.2,
            ..PhysicalParams::nominal()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let o = observe(&s, &c, &p, &mut rng);
            sum += o.phi();
            sum_sq += o.phi() * o.phi();
            assert_eq!(o.v_cmd(), 3.0);
            assert_eq!(o.delta_cmd(), 0.1);
        }
        let mean = sum / n as f64;
        let std = (sum_sq / n as f64 - mean * mean).sqrt();
        assert!((std - 0.157).abs() / 0.157 < 0.02, "std {std}");
    }

    #[test]
    fn termination_rules() {
        let cfg = EnvConfig::default();
        let s = |phi: f64| BikeState {
            phi,
            ..BikeState::upright(2.0)
        };
        assert_eq!(check_termination(&s(0.8), 10, &cfg), (true, false));
        assert_eq!(check_termination(&s(0.0), 3200, &cfg), (false, true));
        assert_eq!(check_termination(&s(0.7853), 100, &cfg), (false, false));
        assert_eq!(check_termination(&s(-0.8), 3199, &cfg), (true, false));
    }

    #[test]
    fn action_mapping() {
        let act = ActuatorModel::default();
        let cmd = Action([1.5, -1.0]).to_command(&act);
        assert_eq!(cmd.delta_target, act.delta_max);
        assert_eq!(cmd.v_target, 0.0);
        let back = Action::from_targets(0.305, 3.0, &act);
        assert!((back.0[0] - 0.5).abs() < 1e-12 && back.0[1].abs() < 1e-12);
    }
}
