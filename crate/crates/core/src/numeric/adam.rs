use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adam moments and hyperparameters for a flat parameter layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Fresh state with β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }

    /// One bias-corrected Adam step over several parameter tensors that
    /// together make up this state's layout, in order.
    pub fn step_segments(&mut self, segments: &mut [(&mut [f64], &[f64])]) -> Result<()> {
        let total: usize = segments.iter().map(|(p, _)| p.len()).sum();
        if total != self.len() {
            return Err(Error::Shape(format!(
                "adam state holds {} parameters, step got {total}",
                self.len()
            )));
        }
        if let Some((p, g)) = segments.iter().find(|(p, g)| p.len() != g.len()) {
            return Err(Error::Shape(format!(
                "parameter segment of length {} paired with gradient of length {}",
                p.len(),
                g.len()
            )));
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);

        let mut offset = 0;
        for (params, grads) in segments.iter_mut() {
            let m = &mut self.first_moment[offset..offset + params.len()];
            let v = &mut self.second_moment[offset..offset + params.len()];
            for (((p, &g), m), v) in params.iter_mut().zip(grads.iter()).zip(m).zip(v) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            offset += params.len();
        }
        Ok(())
    }
}

/// Single-tensor Adam step.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    state.step_segments(&mut [(params, grads)])
}
