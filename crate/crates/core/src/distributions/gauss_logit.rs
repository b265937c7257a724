use super::beta::beta_log_pdf_from_logs;
use super::{check_positive, check_unit_open, BetaParams};
use crate::numerics::special::{log_beta_positive, log_logistic, logistic};
use crate::Result;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `v = σ(μ + σ_scale · ε)`: a Gaussian draw squashed by the logistic function.
pub fn gauss_logit_fraction(eps: f64, mu: f64, sigma: f64) -> f64 {
    logistic(mu + sigma * eps)
}

/// Density of the logistic-normal law on (0, 1) induced by N(μ, σ²).
pub fn logistic_normal_log_pdf(v: f64, mu: f64, sigma: f64) -> Result<f64> {
    check_unit_open(v, "logistic-normal argument")?;
    check_positive(sigma, "logistic-normal sigma")?;
    let t = (v / (1.0 - v)).ln();
    let z = (t - mu) / sigma;
    Ok(-0.5 * z * z - sigma.ln() - HALF_LN_2PI - v.ln() - (-v).ln_1p())
}

/// Single-sample KL estimate `log q_LN(v; μ, σ) − log Beta(v; α, β)` at a
/// fraction `v` previously drawn with [`gauss_logit_fraction`].
pub fn kl_gauss_logit(mu: f64, sigma: f64, prior: BetaParams, v: f64) -> Result<f64> {
    let lq = logistic_normal_log_pdf(v, mu, sigma)?;
    let lp = beta_log_pdf_from_logs(v.ln(), (-v).ln_1p(), prior);
    Ok(lq - lp)
}

/// The same estimate evaluated from the noise `ε` on the logit scale, with
/// its pathwise partials `(kl, ∂/∂μ, ∂/∂σ)` at fixed `ε`.
///
/// With `t = μ + σε` the estimate is
/// `−ε²/2 − log σ − ½ log 2π − α log σ(t) − β log σ(−t) + log B(α, β)`.
pub fn kl_gauss_logit_from_noise(
    eps: f64,
    mu: f64,
    sigma: f64,
    prior: BetaParams,
) -> (f64, f64, f64) {
    let (alpha, beta) = (prior.alpha(), prior.beta());
    let t = mu + sigma * eps;
    let v = logistic(t);
    let kl = -0.5 * eps * eps - sigma.ln() - HALF_LN_2PI - alpha * log_logistic(t)
        - beta * log_logistic(-t)
        + log_beta_positive(alpha, beta);
    let d_t = -alpha * (1.0 - v) + beta * v;
    (kl, d_t, d_t * eps - 1.0 / sigma)
}
