use serde::{Deserialize, Serialize};

use crate::env::ACT_DIM;
use crate::error::{Error, Result};
use crate::nn::policy::{gaussian_entropy, LOG_STD_MAX, LOG_STD_MIN};
use crate::nn::{ActorCritic, Gradients};

/// `min(r A, clip(r, 1 - eps, 1 + eps) A)` and whether the clipped branch is
/// the active (strictly smaller) one.
pub fn clipped_surrogate(ratio: f64, adv: f64, eps: f64) -> (f64, bool) {
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
    if clipped < unclipped {
        (clipped, true)
    } else {
        (unclipped, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefficients {
    pub clip_eps: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

/// Training samples referenced by a minibatch.
#[derive(Debug, Clone, Copy)]
pub struct SampleSet<'a> {
    /// Preprocessed network inputs, `OBS_DIM` per sample.
    pub inputs: &'a [f32],
    /// Raw (pre-clamp) actions, `ACT_DIM` per sample.
    pub actions: &'a [f32],
    pub old_log_probs: &'a [f64],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossStats {
    pub total: f64,
    /// Mean clipped surrogate (the quantity maximized).
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    /// `mean((r - 1) - ln r)`, a non-negative KL estimate.
    pub approx_kl: f64,
    pub samples: usize,
}

pub struct LossGradients {
    pub actor: Gradients<f32>,
    pub critic: Gradients<f32>,
    pub log_std: Vec<f32>,
}

/// Loss `-surrogate + c_v * mse(V, R) - c_e * entropy` over `idx` and its
/// gradient. Sums run in f64 in the order of `idx`.
pub fn ppo_loss(
    policy: &ActorCritic<f32>,
    samples: &SampleSet,
    idx: &[usize],
    coef: &LossCoefficients,
    with_grad: bool,
) -> Result<(LossStats, Option<LossGradients>)> {
    use crate::env::OBS_DIM;
    let b = idx.len();
    if b == 0 {
        return Err(Error::Shape("empty minibatch".into()));
    }
    let mut input = Vec::with_capacity(b * OBS_DIM);
    for &i in idx {
        input.extend_from_slice(&samples.inputs[i * OBS_DIM..(i + 1) * OBS_DIM]);
    }
    let (out, cache) = policy.forward(&input)?;
    let raw_ls = &policy.log_std;
    let ls: Vec<f64> = policy.clamped_log_std().iter().map(|&l| l as f64).collect();
    let ls_active: Vec<bool> = raw_ls
        .iter()
        .map(|&l| (LOG_STD_MIN..=LOG_STD_MAX).contains(&(l as f64)))
        .collect();
    let const_term =
        -ls.iter().sum::<f64>() - 0.5 * ACT_DIM as f64 * (2.0 * std::f64::consts::PI).ln();

    let bf = b as f64;
    let mut surrogate = 0.0;
    let mut vloss = 0.0;
    let mut clipped = 0usize;
    let mut kl = 0.0;
    let mut d_mean = vec![0.0f32; b * ACT_DIM];
    let mut d_value = vec![0.0f32; b];
    let mut d_ls = vec![0.0f64; ACT_DIM];

    for (j, &i) in idx.iter().enumerate() {
        let mut z = [0.0; ACT_DIM];
        let mut logp = const_term;
        for k in 0..ACT_DIM {
            let m = out.mean[j * ACT_DIM + k] as f64;
            let a = samples.actions[i * ACT_DIM + k] as f64;
            z[k] = (a - m) / ls[k].exp();
            logp -= 0.5 * z[k] * z[k];
        }
        let log_ratio = logp - samples.old_log_probs[i];
        let ratio = log_ratio.exp();
        let adv = samples.advantages[i];
        let (term, is_clipped) = clipped_surrogate(ratio, adv, coef.clip_eps);
        surrogate += term;
        kl += (ratio - 1.0) - log_ratio;
        if is_clipped {
            clipped += 1;
        } else if with_grad {
            // d(-r A / B)/d logp = -r A / B
            let g = -ratio * adv / bf;
            for k in 0..ACT_DIM {
                d_mean[j * ACT_DIM + k] = (g * z[k] / ls[k].exp()) as f32;
                d_ls[k] += g * (z[k] * z[k] - 1.0);
            }
        }
        let v = out.value[j] as f64;
        let err = v - samples.returns[i];
        vloss += err * err;
        d_value[j] = (2.0 * coef.value_coef * err / bf) as f32;
    }

    let entropy = gaussian_entropy(&ls);
    let surrogate = surrogate / bf;
    let vloss = vloss / bf;
    let total = -surrogate + coef.value_coef * vloss - coef.entropy_coef * entropy;
    if !total.is_finite() {
        return Err(Error::TrainingFault(format!("non-finite loss {total}")));
    }
    let stats = LossStats {
        total,
        surrogate,
        value_loss: vloss,
        entropy,
        clip_fraction: clipped as f64 / bf,
        approx_kl: kl / bf,
        samples: b,
    };
    if !with_grad {
        return Ok((stats, None));
    }
    for k in 0..ACT_DIM {
        d_ls[k] -= coef.entropy_coef;
        if !ls_active[k] {
            d_ls[k] = 0.0;
        }
    }
    let (actor, critic) = policy.backward(&cache, &d_mean, &d_value)?;
    Ok((
        stats,
        Some(LossGradients {
            actor,
            critic,
            log_std: d_ls.iter().map(|&g| g as f32).collect(),
        }),
    ))
}
