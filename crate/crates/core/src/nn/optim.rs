use serde::{Deserialize, Serialize};

use super::network::{flatten_gradients, Gradients, ModelWeights};
use crate::error::{Error, Result};

/// Adam with bias correction. Moments are flat, in tensor-name order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(parameter_count: usize) -> Self {
        Self {
            step: 0,
            first_moment: vec![0.0; parameter_count],
            second_moment: vec![0.0; parameter_count],
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn for_model(weights: &ModelWeights) -> Self {
        Self::new(weights.parameter_count())
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    /// Updates `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::Usage(format!(
                "adam state holds {} moments, got {} params and {} grads",
                self.first_moment.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            let m = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            let v = self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            let m_hat = m / c1;
            let v_hat = v / c2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }

    pub fn step_model(&mut self, weights: &mut ModelWeights, grads: &Gradients) -> Result<()> {
        let mut flat = weights.flat_parameters();
        let g = flatten_gradients(weights, grads);
        self.step(&mut flat, &g)?;
        weights.set_flat_parameters(&flat);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = AdamState::new(3);
        let mut p = vec![1.0, -2.0, 0.5];
        s.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = AdamState::new(3);
        let mut p = vec![0.0; 3];
        let g = [0.3, -4.0, 1e-3];
        s.step(&mut p, &g).unwrap();
        for (pi, gi) in p.iter().zip(g) {
            // m̂ = g, v̂ = g², update = lr·g/(|g|+ε)
            let expected = -0.001 * gi / (gi.abs() + 1e-8);
            assert!((pi - expected).abs() < 1e-15);
            assert!((pi.abs() - 0.001).abs() < 1e-7);
        }
    }

    #[test]
    fn state_round_trips_bit_exactly() {
        let mut s = AdamState::new(4);
        let mut p = vec![0.1, 0.2, 0.3, 0.4];
        s.step(&mut p, &[0.01, -0.7, 1.3e-5, 2.0]).unwrap();
        s.step(&mut p, &[0.02, -0.1, 3.3e-5, 1.0]).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: AdamState = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        for (a, b) in back.second_moment.iter().zip(&s.second_moment) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn mismatched_lengths_error() {
        let mut s = AdamState::new(2);
        assert!(s.step(&mut [0.0; 3], &[0.0; 3]).is_err());
    }
}
