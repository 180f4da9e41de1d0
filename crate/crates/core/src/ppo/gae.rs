use serde::{Deserialize, Serialize};

/// Advantages and value targets, laid out like the rollout (`t * num_envs + e`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageSet {
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// Inputs to the advantage recursion for a `[horizon x num_envs]` rollout.
#[derive(Debug, Clone, Copy)]
pub struct GaeInput<'a> {
    pub horizon: usize,
    pub num_envs: usize,
    pub rewards: &'a [f64],
    pub values: &'a [f64],
    /// Episode ended after this step (fall or timeout).
    pub dones: &'a [bool],
    /// `V(s_final)` on timeout steps, zero elsewhere.
    pub truncation_values: &'a [f64],
    /// `V(s_horizon)` per environment.
    pub bootstrap: &'a [f64],
}

/// One-step temporal-difference error of step `i = t * num_envs + e`.
pub fn td_error(x: &GaeInput, t: usize, e: usize, gamma: f64) -> f64 {
    let n = x.num_envs;
    let i = t * n + e;
    let next = if x.dones[i] {
        x.truncation_values[i]
    } else if t + 1 < x.horizon {
        x.values[i + n]
    } else {
        x.bootstrap[e]
    };
    x.rewards[i] + gamma * next - x.values[i]
}

/// Backward recursion `A_t = delta_t + gamma * lambda * (1 - done_t) * A_{t+1}`.
pub fn compute_gae(x: &GaeInput, gamma: f64, lambda: f64) -> AdvantageSet {
    let (h, n) = (x.horizon, x.num_envs);
    let mut adv = vec![0.0; h * n];
    for e in 0..n {
        let mut next_adv = 0.0;
        for t in (0..h).rev() {
            let i = t * n + e;
            let carry = if x.dones[i] {
                0.0
            } else {
                gamma * lambda * next_adv
            };
            adv[i] = td_error(x, t, e, gamma) + carry;
            next_adv = adv[i];
        }
    }
    let returns = adv.iter().zip(x.values).map(|(a, v)| a + v).collect();
    AdvantageSet {
        advantages: adv,
        returns,
    }
}

/// Shifts and scales `x` to zero mean and unit standard deviation.
pub fn normalize(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    x.iter_mut().for_each(|v| *v = (*v - mean) / std);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_step_hand_unrolled() {
        let (g, l) = (0.99, 0.95);
        let x = GaeInput {
            horizon: 3,
            num_envs: 1,
            rewards: &[1.0, 1.0, 1.0],
            values: &[0.0, 0.0, 0.0],
            dones: &[false; 3],
            truncation_values: &[0.0; 3],
            bootstrap: &[0.0],
        };
        let a = compute_gae(&x, g, l).advantages;
        let a2 = 1.0;
        let a1 = 1.0 + g * l * a2;
        let a0 = 1.0 + g * l * a1;
        assert!((a[0] - a0).abs() < 1e-12 && (a[1] - a1).abs() < 1e-12 && a[2] == a2);
    }

    #[test]
    fn truncation_bootstraps_final_value() {
        let x = GaeInput {
            horizon: 1,
            num_envs: 1,
            rewards: &[1.0],
            values: &[0.5],
            dones: &[true],
            truncation_values: &[10.0],
            bootstrap: &[99.0],
        };
        let a = compute_gae(&x, 0.9, 0.95).advantages[0];
        assert!((a - (1.0 + 9.0 - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn normalized_moments() {
        let mut v = vec![1.0, 2.0, 3.0, 10.0];
        normalize(&mut v);
        let mean: f64 = v.iter().sum::<f64>() / 4.0;
        let var: f64 = v.iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-9);
    }
}
