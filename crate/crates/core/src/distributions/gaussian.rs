use super::check_positive;
use crate::error::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Diagonal Gaussian N(μ, diag σ²).
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianParams {
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

impl GaussianParams {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mu.len() != sigma.len() {
            return Err(Error::Dimension(format!(
                "mu has {} entries, sigma {}",
                mu.len(),
                sigma.len()
            )));
        }
        for &s in &sigma {
            check_positive(s, "Gaussian sigma")?;
        }
        Ok(Self { mu, sigma })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// KL(N(μ, diag σ²) ‖ N(0, I)) = ½ Σ (μ² + σ² − 1 − 2 log σ).
pub fn kl_diag_gaussian_std_normal(g: &GaussianParams) -> f64 {
    g.mu
        .iter()
        .zip(&g.sigma)
        .map(|(m, s)| 0.5 * (m * m + s * s - 1.0 - 2.0 * s.ln()))
        .sum()
}

pub fn diag_gaussian_log_pdf(z: &[f64], g: &GaussianParams) -> Result<f64> {
    if z.len() != g.dim() {
        return Err(Error::Dimension(format!(
            "point of length {} for a {}-dimensional Gaussian",
            z.len(),
            g.dim()
        )));
    }
    Ok(z.iter()
        .zip(g.mu.iter().zip(&g.sigma))
        .map(|(x, (m, s))| {
            let e = (x - m) / s;
            -0.5 * e * e - s.ln() - HALF_LN_2PI
        })
        .sum())
}

pub fn std_normal_log_pdf(z: &[f64]) -> f64 {
    z.iter().map(|x| -0.5 * x * x - HALF_LN_2PI).sum()
}
