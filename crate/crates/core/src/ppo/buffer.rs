use rand::Rng;

use crate::env::{Action, BatchEnv, EpisodeSummary, ACT_DIM, OBS_DIM};
use crate::error::{Error, Result};
use crate::nn::ActorCritic;
use crate::ppo::gae::GaeInput;

/// Fixed-horizon batched trajectories, indexed `t * num_envs + e`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub horizon: usize,
    pub num_envs: usize,
    /// Preprocessed policy inputs, `OBS_DIM` per transition.
    pub inputs: Vec<f32>,
    /// Raw Gaussian draws, `ACT_DIM` per transition.
    pub raw_actions: Vec<f32>,
    /// Actions as applied to the environment.
    pub actions: Vec<Action>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    /// Per-step weighted reward components.
    pub reward_terms: Vec<[f64; 5]>,
    pub values: Vec<f64>,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
    /// `V(s_final)` on truncated steps, zero elsewhere.
    pub truncation_values: Vec<f64>,
    /// `V(s_horizon)` per environment.
    pub bootstrap: Vec<f64>,
    /// Episodes that ended during collection.
    pub episodes: Vec<EpisodeSummary>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.horizon * self.num_envs
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dones(&self) -> Vec<bool> {
        self.terminated
            .iter()
            .zip(&self.truncated)
            .map(|(a, b)| *a || *b)
            .collect()
    }

    pub fn gae_input<'a>(&'a self, dones: &'a [bool]) -> GaeInput<'a> {
        GaeInput {
            horizon: self.horizon,
            num_envs: self.num_envs,
            rewards: &self.rewards,
            values: &self.values,
            dones,
            truncation_values: &self.truncation_values,
            bootstrap: &self.bootstrap,
        }
    }
}

/// Steps every environment `horizon` times under the stochastic policy.
pub fn collect_rollout<R: Rng + ?Sized>(
    policy: &mut ActorCritic<f32>,
    envs: &mut BatchEnv,
    horizon: usize,
    rng: &mut R,
) -> Result<RolloutBuffer> {
    let n = envs.len();
    if horizon == 0 || n == 0 {
        return Err(Error::InvalidSpec(
            "horizon and num_envs must be >= 1".into(),
        ));
    }
    let cap = horizon * n;
    let mut buf = RolloutBuffer {
        horizon,
        num_envs: n,
        inputs: Vec::with_capacity(cap * OBS_DIM),
        raw_actions: Vec::with_capacity(cap * ACT_DIM),
        actions: Vec::with_capacity(cap),
        log_probs: Vec::with_capacity(cap),
        rewards: Vec::with_capacity(cap),
        reward_terms: Vec::with_capacity(cap),
        values: Vec::with_capacity(cap),
        terminated: Vec::with_capacity(cap),
        truncated: Vec::with_capacity(cap),
        truncation_values: vec![0.0; cap],
        bootstrap: Vec::new(),
        episodes: Vec::new(),
    };
    let w = envs.envs()[0].config().reward.weights;
    let mut obs = envs.observations();
    for t in 0..horizon {
        if let Some(bad) = obs.iter().position(|o| !o.is_finite()) {
            return Err(Error::TrainingFault(format!(
                "non-finite observation in env {bad}"
            )));
        }
        policy.observe_stats(&obs);
        let input = policy.preprocess(&obs);
        let (raw, logp, values) = policy.sample(&input, rng)?;
        let actions: Vec<Action> = raw
            .iter()
            .map(|a| Action([a[0] as f64, a[1] as f64]).clamped())
            .collect();
        let results = envs.step(&actions)?;

        let mut final_inputs = Vec::new();
        let mut final_slots = Vec::new();
        for (e, r) in results.iter().enumerate() {
            if r.truncated && !r.terminated {
                let fo = r.info.final_obs.unwrap_or(r.obs);
                final_inputs.extend(policy.preprocess(&[fo]));
                final_slots.push(t * n + e);
            }
            if let Some(ep) = r.info.episode {
                buf.episodes.push(ep);
            }
        }
        if !final_slots.is_empty() {
            let v = policy.values(&final_inputs)?;
            for (slot, v) in final_slots.into_iter().zip(v) {
                buf.truncation_values[slot] = v as f64;
            }
        }

        buf.inputs.extend_from_slice(&input);
        for a in &raw {
            buf.raw_actions.extend_from_slice(a);
        }
        buf.actions.extend_from_slice(&actions);
        buf.log_probs.extend(logp.iter().map(|&l| l as f64));
        buf.values.extend(values.iter().map(|&v| v as f64));
        for r in &results {
            if !r.reward.is_finite() {
                return Err(Error::TrainingFault("non-finite reward".into()));
            }
            buf.rewards.push(r.reward);
            buf.reward_terms
                .push(r.reward_terms.weighted(&w).as_array());
            buf.terminated.push(r.terminated);
            buf.truncated.push(r.truncated);
        }
        obs = results.iter().map(|r| r.obs).collect();
    }
    let last = policy.preprocess(&obs);
    buf.bootstrap = policy.values(&last)?.iter().map(|&v| v as f64).collect();
    Ok(buf)
}
