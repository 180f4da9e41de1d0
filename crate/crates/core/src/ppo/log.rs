use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Statistics of one rollout-update cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Cumulative environment transitions; the log's monotone clock.
    pub env_steps: u64,
    pub episodes_completed: usize,
    /// Mean length of the last 100 completed episodes.
    pub mean_episode_length: Option<f64>,
    /// Mean total reward of the last 100 completed episodes.
    pub mean_total_reward: Option<f64>,
    /// Mean per-step reward over the rollout.
    pub mean_step_reward: f64,
    pub reward_surv: f64,
    pub reward_vel: f64,
    pub reward_steer: f64,
    pub reward_act: f64,
    pub reward_rate: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub grad_norm: f64,
    pub lr: f64,
    pub action_std: f64,
}

/// Append-only sequence of epoch records.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn push(&mut self, e: EpochLog) {
        debug_assert!(self
            .epochs
            .last()
            .is_none_or(|l| l.env_steps <= e.env_steps));
        self.epochs.push(e);
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochLog> {
        self.epochs.last()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for e in &self.epochs {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for e in &self.epochs {
            serde_json::to_writer(&mut f, e)?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut log = TrainLog::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            log.push(serde_json::from_str(line)?);
        }
        Ok(log)
    }

    /// Trailing moving average of `f` with window `w` (shorter at the start).
    pub fn moving_average(&self, w: usize, f: impl Fn(&EpochLog) -> f64) -> Vec<f64> {
        let xs: Vec<f64> = self.epochs.iter().map(f).collect();
        moving_average(&xs, w)
    }
}

/// Desk-scale learning-curve targets.
pub const CURVE_LENGTH_TARGET: f64 = 2500.0;
pub const CURVE_EPOCH_LIMIT: usize = 300;
pub const CURVE_WINDOW: usize = 20;

/// Outcome of checking a training log against the learning-curve targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveCheck {
    /// First epoch within the limit whose mean episode length exceeds the target.
    pub reached_epoch: Option<usize>,
    pub peak_length: Option<f64>,
    pub peak_epoch: Option<usize>,
    pub final_length: Option<f64>,
    /// Trailing moving average of `mean_total_reward` over full windows.
    pub reward_ma: Vec<f64>,
    pub monotone: bool,
}

impl CurveCheck {
    pub fn passed(&self) -> bool {
        self.reached_epoch.is_some() && self.monotone
    }
}

/// Means of every full window of `w` consecutive present values; `None`
/// entries (epochs before any episode finished) are skipped.
pub fn window_means(xs: &[Option<f64>], w: usize) -> Vec<f64> {
    let v: Vec<f64> = xs.iter().flatten().copied().collect();
    v.windows(w.max(1))
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}

pub fn is_non_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|p| p[1] >= p[0])
}

impl TrainLog {
    pub fn curve_check(&self, length_target: f64, epoch_limit: usize, window: usize) -> CurveCheck {
        let lengths: Vec<(usize, f64)> = self
            .epochs
            .iter()
            .filter_map(|e| e.mean_episode_length.map(|l| (e.epoch, l)))
            .collect();
        let peak = lengths
            .iter()
            .copied()
            .fold(None, |best: Option<(usize, f64)>, x| match best {
                Some(b) if b.1 >= x.1 => Some(b),
                _ => Some(x),
            });
        let rewards: Vec<Option<f64>> = self.epochs.iter().map(|e| e.mean_total_reward).collect();
        let means = window_means(&rewards, window);
        CurveCheck {
            reached_epoch: lengths
                .iter()
                .find(|&&(e, l)| e <= epoch_limit && l > length_target)
                .map(|&(e, _)| e),
            peak_length: peak.map(|p| p.1),
            peak_epoch: peak.map(|p| p.0),
            final_length: self.epochs.last().and_then(|e| e.mean_episode_length),
            monotone: means.len() >= 2 && is_non_decreasing(&means),
            reward_ma: means,
        }
    }
}

pub fn moving_average(xs: &[f64], w: usize) -> Vec<f64> {
    let w = w.max(1);
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for i in 0..xs.len() {
        sum += xs[i];
        if i >= w {
            sum -= xs[i - w];
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_window() {
        let ma = moving_average(&[1.0, 2.0, 3.0, 4.0], 2);
        assert_eq!(ma, vec![1.0, 1.5, 2.5, 3.5]);
    }

    #[test]
    fn windows_skip_missing_values() {
        let xs = [None, Some(2.0), Some(4.0), Some(6.0), Some(9.0)];
        assert_eq!(window_means(&xs, 2), vec![3.0, 5.0, 7.5]);
        assert!(is_non_decreasing(&[1.0, 1.0, 2.0]));
        assert!(!is_non_decreasing(&[1.0, 0.999, 2.0]));
    }
}
