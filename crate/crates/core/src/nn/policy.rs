use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mlp::{ForwardCache, Gradients, Mlp, Topology};
use crate::env::{Action, Observation, ACT_DIM, OBS_DIM};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Typical magnitude of each observation channel; inputs are divided by it.
pub const POLICY_INPUT_SCALE: [f64; OBS_DIM] = [0.3, 1.5, 0.3, 3.0, 3.0, 0.5, 3.0, 0.1745];

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log-density of `a` under a diagonal Gaussian.
pub fn gaussian_log_prob<T: Scalar>(mean: &[T], log_std: &[T], a: &[T]) -> T {
    let half = T::lit(0.5);
    mean.iter()
        .zip(log_std)
        .zip(a)
        .map(|((&m, &ls), &x)| {
            let z = (x - m) / ls.exp();
            -half * z * z - ls - half * T::lit(LN_2PI)
        })
        .sum()
}

/// Entropy of a diagonal Gaussian.
pub fn gaussian_entropy<T: Scalar>(log_std: &[T]) -> T {
    let c = T::lit(0.5 * (1.0 + LN_2PI));
    log_std.iter().map(|&ls| ls + c).sum()
}

/// Welford running mean and variance, per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    pub count: f64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
    /// When frozen, `update` is a no-op.
    pub frozen: bool,
}

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            frozen: false,
        }
    }

    pub fn update(&mut self, x: &[f64]) {
        if self.frozen {
            return;
        }
        self.count += 1.0;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / self.count;
            *s += d * (v - *m);
        }
    }

    pub fn std(&self, i: usize) -> f64 {
        if self.count < 2.0 {
            1.0
        } else {
            (self.m2[i] / (self.count - 1.0)).sqrt().max(1e-4)
        }
    }

    pub fn apply(&self, i: usize, v: f64) -> f64 {
        ((v - self.mean[i]) / self.std(i)).clamp(-10.0, 10.0)
    }
}

/// Diagonal-Gaussian policy over normalized actions and a state-value critic.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic<T> {
    pub actor: Mlp<T>,
    pub critic: Mlp<T>,
    /// State-independent log standard deviation (unclamped parameter).
    pub log_std: Vec<T>,
    pub normalizer: Option<RunningNorm>,
}

/// Everything needed to back-propagate a batch through the actor and critic.
#[derive(Debug, Clone)]
pub struct PolicyCache<T> {
    pub actor: ForwardCache<T>,
    pub critic: ForwardCache<T>,
}

/// One batched evaluation of the policy.
#[derive(Debug, Clone)]
pub struct PolicyOutput<T> {
    /// `batch x ACT_DIM`
    pub mean: Vec<T>,
    /// `batch`
    pub value: Vec<T>,
}

impl<T: Scalar> ActorCritic<T> {
    pub fn new<R: Rng + ?Sized>(hidden: &[usize], normalize: bool, rng: &mut R) -> Self {
        let gain = std::f64::consts::SQRT_2;
        Self {
            actor: Mlp::random(Topology::new(OBS_DIM, hidden, ACT_DIM), gain, 0.01, rng),
            critic: Mlp::random(Topology::new(OBS_DIM, hidden, 1), gain, 1.0, rng),
            log_std: vec![T::zero(); ACT_DIM],
            normalizer: normalize.then(|| RunningNorm::new(OBS_DIM)),
        }
    }

    pub fn clamped_log_std(&self) -> Vec<T> {
        self.log_std
            .iter()
            .map(|&l| l.max(T::lit(LOG_STD_MIN)).min(T::lit(LOG_STD_MAX)))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.actor.is_finite()
            && self.critic.is_finite()
            && self.log_std.iter().all(|l| l.is_finite())
    }

    pub fn observe_stats(&mut self, obs: &[Observation]) {
        if let Some(n) = &mut self.normalizer {
            for o in obs {
                n.update(&o.0);
            }
        }
    }

    /// Network input for a batch of observations.
    pub fn preprocess(&self, obs: &[Observation]) -> Vec<T> {
        let mut out = Vec::with_capacity(obs.len() * OBS_DIM);
        for o in obs {
            for (i, &v) in o.0.iter().enumerate() {
                let x = match &self.normalizer {
                    Some(n) => n.apply(i, v),
                    None => v / POLICY_INPUT_SCALE[i],
                };
                out.push(T::lit(x));
            }
        }
        out
    }

    pub fn forward(&self, input: &[T]) -> Result<(PolicyOutput<T>, PolicyCache<T>)> {
        let (mean, actor) = self.actor.forward(input)?;
        let (value, critic) = self.critic.forward(input)?;
        Ok((PolicyOutput { mean, value }, PolicyCache { actor, critic }))
    }

    pub fn values(&self, input: &[T]) -> Result<Vec<T>> {
        self.critic.predict(input)
    }

    /// Deterministic (mean) actions.
    pub fn act_deterministic(&self, obs: &[Observation]) -> Result<Vec<Action>> {
        let mean = self.actor.predict(&self.preprocess(obs))?;
        Ok(mean
            .chunks_exact(ACT_DIM)
            .map(|m| Action([m[0].to_f64_lossy(), m[1].to_f64_lossy()]))
            .collect())
    }

    /// Samples actions for a batch. Returns `(actions, log_probs, values)`;
    /// actions are the raw Gaussian draws before environment clamping.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        input: &[T],
        rng: &mut R,
    ) -> Result<(Vec<[T; ACT_DIM]>, Vec<T>, Vec<T>)> {
        let mean = self.actor.predict(input)?;
        let value = self.critic.predict(input)?;
        let ls = self.clamped_log_std();
        let mut actions = Vec::with_capacity(value.len());
        let mut logp = Vec::with_capacity(value.len());
        for m in mean.chunks_exact(ACT_DIM) {
            let mut a = [T::zero(); ACT_DIM];
            for k in 0..ACT_DIM {
                let z: f64 = rng.sample(StandardNormal);
                a[k] = m[k] + ls[k].exp() * T::lit(z);
            }
            logp.push(gaussian_log_prob(m, &ls, &a));
            actions.push(a);
        }
        Ok((actions, logp, value))
    }

    /// Gradients for the actor, critic and log-std given per-sample
    /// derivatives of the loss w.r.t. means and values.
    pub fn backward(
        &self,
        cache: &PolicyCache<T>,
        d_mean: &[T],
        d_value: &[T],
    ) -> Result<(Gradients<T>, Gradients<T>)> {
        if d_mean.len() != cache.actor.batch() * ACT_DIM || d_value.len() != cache.critic.batch() {
            return Err(Error::Shape("policy gradient batch mismatch".into()));
        }
        Ok((
            self.actor.backward(&cache.actor, d_mean)?,
            self.critic.backward(&cache.critic, d_value)?,
        ))
    }
}
