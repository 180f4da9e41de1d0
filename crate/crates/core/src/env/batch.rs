use std::sync::Arc;

use super::{Action, BikeEnv, EnvConfig, Observation, StepResult};
use crate::error::{Error, Result};

/// A batch of independent environments stepped in lockstep with auto-reset.
///
/// Environment `i` is seeded from `(seed, i, episode)`; results never depend
/// on the number of worker threads.
#[derive(Debug, Clone)]
pub struct BatchEnv {
    envs: Vec<BikeEnv>,
    workers: usize,
}

impl BatchEnv {
    pub fn new(cfg: Arc<EnvConfig>, num_envs: usize, seed: u64) -> Self {
        let envs = (0..num_envs)
            .map(|i| BikeEnv::new(cfg.clone(), seed, i as u64))
            .collect();
        Self { envs, workers: 1 }
    }

    /// Fans stepping out over `workers` threads on disjoint index ranges.
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn envs(&self) -> &[BikeEnv] {
        &self.envs
    }

    pub fn envs_mut(&mut self) -> &mut [BikeEnv] {
        &mut self.envs
    }

    pub fn observations(&self) -> Vec<Observation> {
        self.envs.iter().map(|e| e.observation()).collect()
    }

    /// Steps every environment. Finished environments are reset with fresh
    /// randomization; the terminal observation is kept in `info.final_obs`.
    pub fn step(&mut self, actions: &[Action]) -> Result<Vec<StepResult>> {
        if actions.len() != self.envs.len() {
            return Err(Error::BatchMismatch {
                envs: self.envs.len(),
                actions: actions.len(),
            });
        }
        if self.workers <= 1 || self.envs.len() < 2 * self.workers {
            return Ok(self
                .envs
                .iter_mut()
                .zip(actions)
                .map(|(env, a)| step_one(env, a))
                .collect());
        }
        let chunk = self.envs.len().div_ceil(self.workers);
        let mut out: Vec<Vec<StepResult>> = Vec::new();
        std::thread::scope(|scope| {
            let handles: Vec<_> = self
                .envs
                .chunks_mut(chunk)
                .zip(actions.chunks(chunk))
                .map(|(envs, acts)| {
                    scope.spawn(move || {
                        envs.iter_mut()
                            .zip(acts)
                            .map(|(env, a)| step_one(env, a))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            out = handles
                .into_iter()
                .map(|h| h.join().expect("environment worker panicked"))
                .collect();
        });
        Ok(out.into_iter().flatten().collect())
    }
}

fn step_one(env: &mut BikeEnv, action: &Action) -> StepResult {
    let mut result = env.step(action);
    if result.done() {
        result.info.final_obs = Some(result.obs);
        result.obs = env.reset();
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::randomization::RandomizationSpec;

    #[test]
    fn mismatched_batch_is_rejected() {
        let mut b = BatchEnv::new(Arc::new(EnvConfig::default()), 3, 0);
        assert!(matches!(
            b.step(&[Action::default(); 2]),
            Err(Error::BatchMismatch {
                envs: 3,
                actions: 2
            })
        ));
    }

    #[test]
    fn identical_envs_identical_results() {
        let cfg = Arc::new(EnvConfig {
            randomization: RandomizationSpec::none(),
            ..EnvConfig::default()
        });
        let mut b = BatchEnv::new(cfg, 4, 0);
        // Distinct indices get distinct noise streams, but with randomization
        // off and zero noise every env evolves identically.
        let acts = vec![Action([0.1, 0.2]); 4];
        for _ in 0..50 {
            let r = b.step(&acts).unwrap();
            for x in &r[1..] {
                assert_eq!(x, &r[0]);
            }
        }
    }

    #[test]
    fn only_the_fallen_env_resets() {
        let mut b = BatchEnv::new(Arc::new(EnvConfig::default()), 2, 5);
        b.envs_mut()[0].set_roll(1.0);
        let before = b.envs()[1].state;
        let r = b.step(&[Action::default(); 2]).unwrap();
        assert!(r[0].terminated && r[0].info.final_obs.is_some());
        assert_eq!(b.envs()[0].episode_index(), 1);
        assert!(!r[1].done());
        assert_eq!(b.envs()[1].episode_index(), 0);
        assert!(b.envs()[1].state.t > before.t);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let cfg = Arc::new(EnvConfig::default());
        let mut serial = BatchEnv::new(cfg.clone(), 16, 3);
        let mut threaded = BatchEnv::new(cfg, 16, 3).with_workers(4);
        for k in 0..100 {
            let acts: Vec<Action> = (0..16)
                .map(|i| Action([((i + k) as f64 * 0.3).sin(), 0.2]))
                .collect();
            assert_eq!(serial.step(&acts).unwrap(), threaded.step(&acts).unwrap());
        }
    }
}
