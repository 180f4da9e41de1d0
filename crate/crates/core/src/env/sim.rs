use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::command::{advance_reference, initial_commands, resample_commands, CommandState};
use super::randomization::HUB_WHEEL_RADIUS;
use super::reward::{compute_reward, RewardTerms};
use super::{
    check_termination, observe, Action, EnvConfig, EpisodeSummary, Observation, StepInfo,
    StepResult,
};
use crate::dynamics::{step_control, BikeState, DisturbanceConfig, PhysicalParams};
use crate::rng::stream_rng;

/// Initial conditions of one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStart {
    pub state: BikeState<f64>,
    pub params: PhysicalParams<f64>,
    pub disturbance: DisturbanceConfig<f64>,
    pub commands: CommandState,
    /// Actuator set-points at engagement, expressed as a normalized action.
    pub prev_action: [f64; 2],
}

/// Samples the start of an episode. Draw order is fixed (dynamics, initial
/// state, task, terrain) and every variable consumes one draw whether or not
/// its group is enabled.
pub fn reset_sample<R: Rng + ?Sized>(cfg: &EnvConfig, rng: &mut R) -> EpisodeStart {
    let spec = &cfg.randomization;
    let params = spec.sample_params(&cfg.base_params, rng);
    let init = spec.sample_initial(rng);
    let commands = initial_commands(spec, 0.0, 0.0, rng);
    let disturbance = spec.sample_terrain(&cfg.disturbance, rng);
    let act = &cfg.actuator;
    let mut state = init.state();
    state.delta = state.delta.clamp(-act.delta_max, act.delta_max);
    let prev_action =
        super::Action::from_targets(state.delta, init.hub_omega * HUB_WHEEL_RADIUS, act).0;
    EpisodeStart {
        state,
        params,
        disturbance,
        commands,
        prev_action,
    }
}

/// A single simulated bicycle with its own random stream.
///
/// Episodes are seeded from `(seed, index, episode)`, so an environment's
/// trajectory never depends on its neighbours.
#[derive(Debug, Clone)]
pub struct BikeEnv {
    cfg: Arc<EnvConfig>,
    seed: u64,
    index: u64,
    episode: u64,
    rng: ChaCha8Rng,
    pub state: BikeState<f64>,
    pub params: PhysicalParams<f64>,
    pub disturbance: DisturbanceConfig<f64>,
    pub commands: CommandState,
    pub prev_action: [f64; 2],
    step_idx: u32,
    last_obs: Observation,
    episode_return: f64,
    episode_terms: RewardTerms,
    /// When set, commands are held (operator-driven mode).
    pub hold_commands: bool,
}

impl BikeEnv {
    pub fn new(cfg: Arc<EnvConfig>, seed: u64, index: u64) -> Self {
        let mut env = Self {
            cfg,
            seed,
            index,
            episode: 0,
            rng: stream_rng(seed, index, 0),
            state: BikeState::zero(),
            params: PhysicalParams::nominal(),
            disturbance: DisturbanceConfig::none(),
            commands: CommandState::fixed(2.0, 0.0),
            prev_action: [0.0; 2],
            step_idx: 0,
            last_obs: Observation::default(),
            episode_return: 0.0,
            episode_terms: RewardTerms::default(),
            hold_commands: false,
        };
        env.start_episode();
        env
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn episode_index(&self) -> u64 {
        self.episode
    }

    pub fn step_index(&self) -> u32 {
        self.step_idx
    }

    pub fn observation(&self) -> Observation {
        self.last_obs
    }

    /// Starts the next episode with a fresh stream.
    pub fn reset(&mut self) -> Observation {
        self.episode += 1;
        self.start_episode()
    }

    /// Restarts from explicit initial conditions, keeping the random stream.
    pub fn reset_to(&mut self, start: EpisodeStart) -> Observation {
        self.apply_start(start);
        self.last_obs = observe(&self.state, &self.commands, &self.params, &mut self.rng);
        self.last_obs
    }

    fn start_episode(&mut self) -> Observation {
        self.rng = stream_rng(self.seed, self.index, self.episode);
        let start = reset_sample(&self.cfg, &mut self.rng);
        self.reset_to(start)
    }

    fn apply_start(&mut self, start: EpisodeStart) {
        self.state = start.state;
        self.params = start.params;
        self.disturbance = start.disturbance;
        self.commands = start.commands;
        self.prev_action = start.prev_action;
        self.step_idx = 0;
        self.episode_return = 0.0;
        self.episode_terms = RewardTerms::default();
    }

    /// Advances one control period. Never resets on its own.
    pub fn step(&mut self, action: &Action) -> StepResult {
        let cfg = &*self.cfg;
        let a = action.clamped();
        let cmd = a.to_command(&cfg.actuator);
        let prev_state = self.state;
        self.state = step_control(
            &prev_state,
            &cmd,
            &self.params,
            &self.disturbance,
            &cfg.actuator,
            cfg.control_dt,
            cfg.substeps,
            &mut self.rng,
        );
        self.step_idx += 1;

        advance_reference(&mut self.commands, self.params.wheelbase, cfg.control_dt);
        let (reward, terms) = compute_reward(
            &self.state,
            &prev_state,
            &a.0,
            &self.prev_action,
            &self.commands,
            &cfg.reward,
        );
        let resampled = if self.hold_commands {
            false
        } else {
            resample_commands(
                &mut self.commands,
                self.state.t,
                &cfg.randomization,
                &mut self.rng,
            )
        };
        let (terminated, truncated) = check_termination(&self.state, self.step_idx, cfg);

        let fresh = observe(&self.state, &self.commands, &self.params, &mut self.rng);
        let drop_u: f64 = self.rng.random();
        let dropped = drop_u < cfg.dropout_rate;
        if !dropped {
            self.last_obs = fresh;
        }
        self.prev_action = a.0;

        self.episode_return += reward;
        self.episode_terms
            .add_assign(&terms.weighted(&cfg.reward.weights));

        let episode = (terminated || truncated).then(|| EpisodeSummary {
            length: self.step_idx,
            total_reward: self.episode_return,
            terms: self.episode_terms,
            fell: terminated,
        });

        StepResult {
            obs: self.last_obs,
            reward,
            reward_terms: terms,
            terminated,
            truncated,
            info: StepInfo {
                final_obs: None,
                episode,
                commands_resampled: resampled,
                dropped_frame: dropped,
            },
        }
    }

    /// Overrides the operator commands (used by the live service).
    pub fn set_commands(&mut self, v_cmd: f64, delta_cmd: f64) {
        self.commands.v_cmd = v_cmd;
        self.commands.delta_cmd = delta_cmd;
    }

    /// Forces the roll angle, e.g. to inject a recovery impulse. The held
    /// observation is refreshed so the controller sees the perturbation.
    pub fn set_roll(&mut self, phi: f64) -> Observation {
        self.state.phi = phi;
        self.last_obs = observe(&self.state, &self.commands, &self.params, &mut self.rng);
        self.last_obs
    }
}
