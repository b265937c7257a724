use crate::error::{Error, Result};

/// Adam hyperparameters; defaults are α = 3e-4, b1 = 0.95, b2 = 0.999,
/// ε = 1e-8.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.95,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for a list of parameter buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, buffer_lens: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            m: buffer_lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: buffer_lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected descent step `θ ← θ − α m̂ / (√v̂ + ε)` on the
    /// gradient of a loss. Nothing is updated if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "Adam tracks {} buffers, got {} parameter and {} gradient buffers",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (b, ((p, g), m)) in params.iter().zip(grads).zip(&self.m).enumerate() {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::Dimension(format!(
                    "buffer {b}: {} parameters, {} gradients, {} moments",
                    p.len(),
                    g.len(),
                    m.len()
                )));
            }
            if g.iter().any(|x| !x.is_finite()) {
                let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                return Err(Error::Numeric(format!(
                    "non-finite gradient at Adam step {} in parameter block {b} (norm {norm})",
                    self.step + 1
                )));
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(&mut self.v)) {
            for i in 0..p.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
            }
        }
        Ok(())
    }
}
