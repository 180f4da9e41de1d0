use serde::{Deserialize, Serialize};

use super::mlp::Gradients;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<T>,
    v: Vec<T>,
    t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(num_params: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![T::zero(); num_params],
            v: vec![T::zero(); num_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update. Non-finite gradients are rejected before any
    /// state is touched.
    pub fn step(&mut self, params: &mut [T], grads: &Gradients<T>, lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.data.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer sized for {} parameters, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.data.len()
            )));
        }
        if !grads.is_finite() {
            return Err(Error::TrainingFault("non-finite gradient".into()));
        }
        self.t += 1;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let one = T::one();
        let t = self.t as i32;
        let c1 = one - b1.powi(t);
        let c2 = one - b2.powi(t);
        let step = T::lit(lr) / c1;
        let eps = T::lit(self.eps);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(&grads.data)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = b1 * *m + (one - b1) * *g;
            *v = b2 * *v + (one - b2) * *g * *g;
            *p -= step * *m / ((*v / c2).sqrt() + eps);
        }
        Ok(())
    }
}

/// Rescales `grads` so that their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut [&mut Gradients<T>], max_norm: f64) -> f64 {
    let total: f64 = grads.iter().map(|g| g.sum_squares().to_f64_lossy()).sum();
    let norm = total.sqrt();
    if norm > max_norm && norm.is_finite() {
        let k = T::lit(max_norm / norm);
        for g in grads.iter_mut() {
            g.scale(k);
        }
    }
    norm
}

/// Cosine decay from `lr0` to `floor_frac * lr0` over `total` updates.
pub fn cosine_lr(step: u64, total: u64, lr0: f64, floor_frac: f64) -> f64 {
    let floor = floor_frac * lr0;
    if total == 0 {
        return lr0;
    }
    let progress = (step.min(total) as f64) / total as f64;
    floor + 0.5 * (lr0 - floor) * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut opt = Adam::<f64>::new(2);
        let mut p = vec![1.0, -1.0];
        let g = Gradients {
            data: vec![0.5, -3.0],
        };
        opt.step(&mut p, &g, 0.01).unwrap();
        assert!((p[0] - 0.99).abs() < 1e-9);
        assert!((p[1] + 0.99).abs() < 1e-9);
    }

    #[test]
    fn nan_gradient_is_a_fault() {
        let mut opt = Adam::<f32>::new(1);
        let mut p = vec![0.0f32];
        let g = Gradients {
            data: vec![f32::NAN],
        };
        assert!(matches!(
            opt.step(&mut p, &g, 0.1),
            Err(Error::TrainingFault(_))
        ));
        assert_eq!(p[0], 0.0);
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn clipping_caps_joint_norm() {
        let mut a = Gradients { data: vec![3.0f32] };
        let mut b = Gradients { data: vec![4.0f32] };
        let n = clip_global_norm(&mut [&mut a, &mut b], 1.0);
        assert!((n - 5.0).abs() < 1e-6);
        assert!((a.data[0] - 0.6).abs() < 1e-6 && (b.data[0] - 0.8).abs() < 1e-6);
    }

    #[test]
    fn cosine_endpoints() {
        assert!((cosine_lr(0, 100, 3e-4, 0.1) - 3e-4).abs() < 1e-15);
        assert!((cosine_lr(100, 100, 3e-4, 0.1) - 3e-5).abs() < 1e-15);
        assert!((cosine_lr(50, 100, 1.0, 0.0) - 0.5).abs() < 1e-12);
        assert!((cosine_lr(500, 100, 1.0, 0.1) - 0.1).abs() < 1e-12);
    }
}
