use serde::{Deserialize, Serialize};

use super::ModelError;

/// Initial learning rate for the network weights.
pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: DEFAULT_LEARNING_RATE,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    /// Current rate; starts at `config.learning_rate` and may be halved.
    pub learning_rate: f64,
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: usize) -> Self {
        Self {
            config,
            learning_rate: config.learning_rate,
            step: 0,
            first_moment: vec![0.0; params],
            second_moment: vec![0.0; params],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), ModelError> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(ModelError::Shape {
                what: "optimizer parameters",
                expected: self.first_moment.len(),
                actual: grads.len(),
            });
        }
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(ModelError::NonFiniteGradient { index });
        }
        let AdamConfig {
            beta1, beta2, epsilon, ..
        } = self.config;
        self.step += 1;
        let correct1 = 1.0 - beta1.powf(self.step as f64);
        let correct2 = 1.0 - beta2.powf(self.step as f64);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / correct1;
            let v_hat = *v / correct2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }

    pub fn halve_learning_rate(&mut self) {
        self.learning_rate *= 0.5;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_from_rest() {
        let mut adam = Adam::new(AdamConfig::default(), 3);
        let mut p = vec![1.0, -2.0, 3.0];
        adam.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn moments_decay_under_zero_gradient() {
        let mut adam = Adam::new(AdamConfig::default(), 1);
        let mut p = vec![0.0];
        adam.step(&mut p, &[1.0]).unwrap();
        let (m, v) = (adam.first_moment[0], adam.second_moment[0]);
        adam.step(&mut p, &[0.0]).unwrap();
        assert_eq!(adam.first_moment[0], 0.9 * m);
        assert_eq!(adam.second_moment[0], 0.999 * v);
    }

    #[test]
    fn first_step_is_learning_rate_times_sign() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        let mut adam = Adam::new(AdamConfig::default(), 3);
        let mut p = vec![0.0; 3];
        let g = [0.5, -2.0, 1e-3];
        adam.step(&mut p, &g).unwrap();
        for (pi, gi) in p.iter().zip(g) {
            let expected = -DEFAULT_LEARNING_RATE * gi / (gi.abs() + 1e-8);
            assert!((pi - expected).abs() < 1e-15, "{pi} vs {expected}");
        }
    }

    #[test]
    fn zero_rate_freezes_parameters() {
        let mut adam = Adam::new(
            AdamConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            2,
        );
        let mut p = vec![1.0, 2.0];
        adam.step(&mut p, &[0.3, -0.4]).unwrap();
        assert_eq!(p, vec![1.0, 2.0]);
    }

    #[test]
    fn rejects_non_finite() {
        let mut adam = Adam::new(AdamConfig::default(), 2);
        let mut p = vec![1.0, 2.0];
        assert_eq!(
            adam.step(&mut p, &[0.0, f64::NAN]),
            Err(ModelError::NonFiniteGradient { index: 1 })
        );
        assert_eq!(adam.step, 0);
    }
}
