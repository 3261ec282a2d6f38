//! Adam optimizer with bias-corrected moments.

use serde::{Deserialize, Serialize};

/// Optimizer state for a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    /// Default decay rates `(0.9, 0.999)` and `eps = 1e-8`.
    pub fn new(len: usize) -> Self {
        Self::with_rates(len, 0.9, 0.999, 1e-8)
    }

    pub fn with_rates(len: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { beta1, beta2, eps, step: 0, m: vec![0.0; len], v: vec![0.0; len] }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to `params` in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len(), "parameter length");
        assert_eq!(grad.len(), self.m.len(), "gradient length");
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut adam = Adam::new(3);
        let mut p = vec![1.0, -2.0, 0.5];
        adam.step(&mut p, &[0.0; 3], 0.1);
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_is_normalized() {
        let mut adam = Adam::new(2);
        let mut p = vec![0.0, 0.0];
        adam.step(&mut p, &[3.0, -0.02], 0.01);
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        assert!((p[0] + 0.01 * 3.0 / (3.0 + 1e-8)).abs() < 1e-15);
        assert!((p[1] - 0.01 * 0.02 / (0.02 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn second_step_matches_scalar_recurrence() {
        let (b1, b2, eps, lr, g) = (0.9, 0.999, 1e-8, 0.1, 0.5);
        let mut adam = Adam::with_rates(1, b1, b2, eps);
        let mut p = vec![1.0];
        adam.step(&mut p, &[g], lr);
        let after_first = p[0];
        adam.step(&mut p, &[g], lr);
        let m2 = b1 * (1.0 - b1) * g + (1.0 - b1) * g;
        let v2 = b2 * (1.0 - b2) * g * g + (1.0 - b2) * g * g;
        let mh = m2 / (1.0 - b1 * b1);
        let vh = v2 / (1.0 - b2 * b2);
        let expected = after_first - lr * mh / (vh.sqrt() + eps);
        assert!((p[0] - expected).abs() < 1e-15);
        assert_eq!(adam.steps(), 2);
    }
}
