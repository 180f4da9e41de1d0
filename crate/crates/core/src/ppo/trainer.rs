use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::buffer::collect_rollout;
use super::gae::{compute_gae, normalize};
use super::log::{EpochLog, TrainLog};
use super::loss::{ppo_loss, LossCoefficients, LossStats, SampleSet};
use super::TrainConfig;
use crate::env::{BatchEnv, EnvConfig};
use crate::error::Result;
use crate::nn::{checkpoint, clip_global_norm, cosine_lr, ActorCritic, Adam, Gradients};
use crate::rng::derive_seed;

const SEED_INIT: u64 = 1;
const SEED_ENVS: u64 = 2;
const SEED_SAMPLE: u64 = 3;
const SEED_SHUFFLE: u64 = 4;
const EPISODE_WINDOW: usize = 100;

pub struct TrainOutcome {
    pub log: TrainLog,
    pub final_checkpoint: Option<PathBuf>,
}

/// Hex SHA-256 of the serialized training and environment configuration.
pub fn config_hash(cfg: &TrainConfig, env: &EnvConfig) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(cfg).unwrap_or_default());
    h.update(serde_json::to_vec(env).unwrap_or_default());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub struct Trainer {
    cfg: TrainConfig,
    env_cfg: Arc<EnvConfig>,
    pub policy: ActorCritic<f32>,
    envs: BatchEnv,
    actor_opt: Adam<f32>,
    critic_opt: Adam<f32>,
    log_std_opt: Adam<f32>,
    sample_rng: ChaCha8Rng,
    shuffle_rng: ChaCha8Rng,
    epoch: usize,
    env_steps: u64,
    recent: VecDeque<(u32, f64)>,
    pub log: TrainLog,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, env_cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        env_cfg.validate()?;
        let env_cfg = Arc::new(env_cfg);
        let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SEED_INIT));
        let policy = ActorCritic::new(&cfg.hidden, cfg.normalize_obs, &mut init_rng);
        let envs = BatchEnv::new(
            env_cfg.clone(),
            cfg.num_envs,
            derive_seed(cfg.seed, SEED_ENVS),
        )
        .with_workers(cfg.workers);
        Ok(Self {
            actor_opt: Adam::new(policy.actor.num_params()),
            critic_opt: Adam::new(policy.critic.num_params()),
            log_std_opt: Adam::new(policy.log_std.len()),
            sample_rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SEED_SAMPLE)),
            shuffle_rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SEED_SHUFFLE)),
            policy,
            envs,
            env_cfg,
            cfg,
            epoch: 0,
            env_steps: 0,
            recent: VecDeque::with_capacity(EPISODE_WINDOW),
            log: TrainLog::default(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn env_config(&self) -> &EnvConfig {
        &self.env_cfg
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    fn coefficients(&self) -> LossCoefficients {
        LossCoefficients {
            clip_eps: self.cfg.clip_eps,
            value_coef: self.cfg.value_coef,
            entropy_coef: self.cfg.entropy_coef,
        }
    }

    /// One collect, advantage, update cycle.
    pub fn step_epoch(&mut self) -> Result<&EpochLog> {
        let cfg = self.cfg.clone();
        let buf = collect_rollout(
            &mut self.policy,
            &mut self.envs,
            cfg.horizon,
            &mut self.sample_rng,
        )?;
        self.env_steps += buf.len() as u64;
        for ep in &buf.episodes {
            if self.recent.len() == EPISODE_WINDOW {
                self.recent.pop_front();
            }
            self.recent.push_back((ep.length, ep.total_reward));
        }

        let dones = buf.dones();
        let adv_set = compute_gae(&buf.gae_input(&dones), cfg.gamma, cfg.gae_lambda);
        let mut advantages = adv_set.advantages.clone();
        normalize(&mut advantages);
        let samples = SampleSet {
            inputs: &buf.inputs,
            actions: &buf.raw_actions,
            old_log_probs: &buf.log_probs,
            advantages: &advantages,
            returns: &adv_set.returns,
        };

        let lr = cosine_lr(
            self.epoch as u64,
            cfg.epochs as u64,
            cfg.lr,
            cfg.lr_floor_frac,
        );
        let coef = self.coefficients();
        let n = buf.len();
        let mb = n / cfg.minibatches;
        let mut idx: Vec<usize> = (0..n).collect();
        let mut agg = LossStats::default();
        let mut grad_norm = 0.0;
        let mut updates = 0usize;
        for _ in 0..cfg.update_epochs {
            idx.shuffle(&mut self.shuffle_rng);
            for chunk in idx.chunks(mb).take(cfg.minibatches) {
                let (stats, grads) = ppo_loss(&self.policy, &samples, chunk, &coef, true)?;
                let mut g = grads.expect("gradients requested");
                let mut ls = Gradients { data: g.log_std };
                grad_norm += clip_global_norm(
                    &mut [&mut g.actor, &mut g.critic, &mut ls],
                    cfg.max_grad_norm,
                );
                self.actor_opt
                    .step(self.policy.actor.params_mut(), &g.actor, lr)?;
                self.critic_opt
                    .step(self.policy.critic.params_mut(), &g.critic, lr)?;
                self.log_std_opt.step(&mut self.policy.log_std, &ls, lr)?;
                agg.total += stats.total;
                agg.surrogate += stats.surrogate;
                agg.value_loss += stats.value_loss;
                agg.entropy += stats.entropy;
                agg.clip_fraction += stats.clip_fraction;
                agg.approx_kl += stats.approx_kl;
                updates += 1;
            }
        }
        if !self.policy.is_finite() {
            return Err(crate::Error::TrainingFault(
                "non-finite parameters after update".into(),
            ));
        }
        let u = updates as f64;
        let steps = n as f64;
        let mut comp = [0.0; 5];
        for t in &buf.reward_terms {
            for k in 0..5 {
                comp[k] += t[k];
            }
        }
        let window = (!self.recent.is_empty()).then(|| {
            let k = self.recent.len() as f64;
            (
                self.recent.iter().map(|r| r.0 as f64).sum::<f64>() / k,
                self.recent.iter().map(|r| r.1).sum::<f64>() / k,
            )
        });
        let std_mean = self
            .policy
            .clamped_log_std()
            .iter()
            .map(|l| (*l as f64).exp())
            .sum::<f64>()
            / self.policy.log_std.len() as f64;
        let entry = EpochLog {
            epoch: self.epoch,
            env_steps: self.env_steps,
            episodes_completed: buf.episodes.len(),
            mean_episode_length: window.map(|w| w.0),
            mean_total_reward: window.map(|w| w.1),
            mean_step_reward: buf.rewards.iter().sum::<f64>() / steps,
            reward_surv: comp[0] / steps,
            reward_vel: comp[1] / steps,
            reward_steer: comp[2] / steps,
            reward_act: comp[3] / steps,
            reward_rate: comp[4] / steps,
            policy_loss: -agg.surrogate / u,
            value_loss: agg.value_loss / u,
            entropy: agg.entropy / u,
            clip_fraction: agg.clip_fraction / u,
            approx_kl: agg.approx_kl / u,
            grad_norm: grad_norm / u,
            lr,
            action_std: std_mean,
        };
        self.epoch += 1;
        self.log.push(entry);
        Ok(self.log.last().expect("just pushed"))
    }

    fn checkpoint_meta(&self) -> serde_json::Value {
        serde_json::json!({
            "epoch": self.epoch,
            "env_steps": self.env_steps,
            "seed": self.cfg.seed,
            "config_hash": config_hash(&self.cfg, &self.env_cfg),
            "train": self.cfg,
        })
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, &self.policy, self.checkpoint_meta())
    }

    /// Runs all configured epochs. With `out_dir`, writes periodic and final
    /// checkpoints plus the log; a training fault leaves `last_good.cyrl`
    /// holding the parameters from before the failed epoch.
    pub fn run(
        &mut self,
        out_dir: Option<&Path>,
        mut on_epoch: impl FnMut(&EpochLog),
    ) -> Result<TrainOutcome> {
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir)?;
        }
        while self.epoch < self.cfg.epochs {
            let snapshot = out_dir.map(|_| self.policy.clone());
            match self.step_epoch() {
                Ok(e) => on_epoch(e),
                Err(err) => {
                    if let (Some(dir), Some(good)) = (out_dir, snapshot) {
                        checkpoint::save(
                            &dir.join("last_good.cyrl"),
                            &good,
                            self.checkpoint_meta(),
                        )?;
                        self.log.write_jsonl(&dir.join("train_log.jsonl"))?;
                    }
                    return Err(err);
                }
            }
            if let Some(dir) = out_dir {
                if self.epoch % self.cfg.checkpoint_every == 0 {
                    self.save_checkpoint(&dir.join(format!("epoch_{:05}.cyrl", self.epoch)))?;
                }
            }
        }
        let final_checkpoint = match out_dir {
            Some(dir) => {
                let path = dir.join("final.cyrl");
                self.save_checkpoint(&path)?;
                self.log.write_csv(&dir.join("train_log.csv"))?;
                self.log.write_jsonl(&dir.join("train_log.jsonl"))?;
                Some(path)
            }
            None => None,
        };
        Ok(TrainOutcome {
            log: self.log.clone(),
            final_checkpoint,
        })
    }
}
