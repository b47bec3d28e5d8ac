//! Adam optimizer with bias correction, decoupled weight decay, and an
//! exponential learning-rate schedule.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled (AdamW-style) weight decay; 0 disables.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-15,
            weight_decay: 0.0,
        }
    }
}

/// First/second-moment state for one flat parameter block.
#[derive(Debug, Clone)]
pub struct AdamState<S> {
    pub cfg: AdamConfig,
    m: Vec<S>,
    v: Vec<S>,
    step: u64,
}

impl<S: Real> AdamState<S> {
    pub fn new(len: usize, cfg: AdamConfig) -> Self {
        AdamState {
            cfg,
            m: vec![S::zero(); len],
            v: vec![S::zero(); len],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update; errors with [`Error::Divergence`] on non-finite
    /// gradients or parameters.
    pub fn step(&mut self, params: &mut [S], grads: &[S], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(format!(
                "adam block length {} vs params {} / grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step;
        let b1 = S::from_f64_(self.cfg.beta1);
        let b2 = S::from_f64_(self.cfg.beta2);
        let eps = S::from_f64_(self.cfg.eps);
        let lr_s = S::from_f64_(lr);
        let c1 = S::from_f64_(1.0 - self.cfg.beta1.powi(t as i32));
        let c2 = S::from_f64_(1.0 - self.cfg.beta2.powi(t as i32));
        let decay = S::from_f64_(self.cfg.weight_decay * lr);
        for i in 0..params.len() {
            let g = grads[i];
            if !g.is_finite() {
                return Err(Error::Divergence {
                    iteration: t as usize,
                    detail: format!("non-finite gradient at parameter {i}"),
                });
            }
            self.m[i] = b1 * self.m[i] + (S::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (S::one() - b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            let mut p = params[i];
            p -= lr_s * m_hat / (v_hat.sqrt() + eps);
            if decay > S::zero() {
                p -= decay * p;
            }
            if !p.is_finite() {
                return Err(Error::Divergence {
                    iteration: t as usize,
                    detail: format!("non-finite parameter {i} after update"),
                });
            }
            params[i] = p;
        }
        Ok(())
    }
}

/// Exponential decay from `lr_start` at iter 0 to `lr_end` at
/// `total_iters - 1`; constant `lr_start` when `total_iters <= 1`.
pub fn exp_lr_schedule(lr_start: f64, lr_end: f64, iter: usize, total_iters: usize) -> f64 {
    if total_iters <= 1 {
        return lr_start;
    }
    let t = (iter.min(total_iters - 1)) as f64 / (total_iters - 1) as f64;
    lr_start * (lr_end / lr_start).powf(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converges_on_quadratic() {
        // minimize sum (x_i - target_i)^2
        let target = [1.0f64, -2.0, 0.5];
        let mut x = [0.0f64; 3];
        let mut adam = AdamState::new(3, AdamConfig::default());
        for _ in 0..2000 {
            let grads: Vec<f64> = x.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
            adam.step(&mut x, &grads, 0.01).unwrap();
        }
        for (a, b) in x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn first_step_magnitude_is_lr() {
        // bias-corrected first step moves ~lr in -sign(g)
        let mut x = [0.0f64];
        let mut adam = AdamState::new(1, AdamConfig::default());
        adam.step(&mut x, &[3.7], 0.01).unwrap();
        assert!((x[0] + 0.01).abs() < 1e-10, "{}", x[0]);
    }

    #[test]
    fn nan_gradient_is_divergence_error() {
        let mut x = [0.0f64];
        let mut adam = AdamState::new(1, AdamConfig::default());
        let err = adam.step(&mut x, &[f64::NAN], 0.01).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn weight_decay_shrinks_params() {
        let cfg = AdamConfig {
            weight_decay: 0.1,
            ..Default::default()
        };
        let mut x = [1.0f64];
        let mut adam = AdamState::new(1, cfg);
        adam.step(&mut x, &[0.0], 0.01).unwrap();
        assert!(x[0] < 1.0 && x[0] > 0.99);
    }

    #[test]
    fn lr_schedule_endpoints() {
        let total = 6000;
        assert!((exp_lr_schedule(1e-2, 1.6e-3, 0, total) - 1e-2).abs() < 1e-12);
        assert!((exp_lr_schedule(1e-2, 1.6e-3, total - 1, total) - 1.6e-3).abs() < 1e-12);
        // monotone decreasing
        let mut prev = f64::INFINITY;
        for i in (0..total).step_by(500) {
            let lr = exp_lr_schedule(1e-2, 1.6e-3, i, total);
            assert!(lr < prev);
            prev = lr;
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut adam: AdamState<f64> = AdamState::new(2, AdamConfig::default());
        assert!(adam.step(&mut [0.0; 3], &[0.0; 3], 0.01).is_err());
    }
}
