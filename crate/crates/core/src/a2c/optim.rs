use serde::{Deserialize, Serialize};

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

pub fn global_norm(grads: &[f64]) -> f64 {
    grads.iter().map(|g| g * g).sum::<f64>().sqrt()
}

/// Rescales `grads` to `max_norm` when their global L2 norm exceeds it.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut opt = Adam::new(3, 1e-3, 1e-7);
        let mut p = vec![0.5, -1.0, 2.0];
        opt.step(&mut p, &[0.0; 3]);
        assert_eq!(p, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // bias-corrected first step is lr * sign(g) up to eps
        let mut opt = Adam::new(2, 0.01, 1e-12);
        let mut p = vec![0.0, 0.0];
        opt.step(&mut p, &[3.0, -0.2]);
        assert!((p[0] + 0.01).abs() < 1e-9);
        assert!((p[1] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut opt = Adam::new(1, 0.05, 1e-8);
        let mut p = vec![4.0];
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 1.5)];
            opt.step(&mut p, &g);
        }
        assert!((p[0] - 1.5).abs() < 1e-3);
    }

    #[test]
    fn small_gradients_untouched() {
        let mut g = vec![0.3, 0.4];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 0.5);
        assert_eq!(g, vec![0.3, 0.4]);
    }

    proptest! {
        #[test]
        fn clipped_norm_is_max(g in prop::collection::vec(-100.0f64..100.0, 1..200), max in 0.1f64..5.0) {
            let mut g = g;
            let before = clip_grad_norm(&mut g, max);
            let after = global_norm(&g);
            if before > max {
                prop_assert!((after - max).abs() < 1e-9);
            } else {
                prop_assert_eq!(after, before);
            }
        }
    }
}
