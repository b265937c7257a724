//! Special functions and numerically careful scalar helpers.

use crate::error::{domain, Result};

/// Euler–Mascheroni constant γ.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

// Shift arguments up to this point before switching to the asymptotic series.
const ASYMPTOTIC_FROM: f64 = 10.0;

/// Digamma Ψ(x) for x > 0.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return domain(format!("digamma requires a positive finite argument, got {x}"));
    }
    Ok(digamma_positive(x))
}

pub(crate) fn digamma_positive(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < ASYMPTOTIC_FROM {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let tail = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    acc + x.ln() - 0.5 * inv - tail
}

/// Trigamma Ψ'(x) for x > 0.
pub fn trigamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return domain(format!("trigamma requires a positive finite argument, got {x}"));
    }
    Ok(trigamma_positive(x))
}

pub(crate) fn trigamma_positive(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < ASYMPTOTIC_FROM {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let tail = inv
        + 0.5 * inv2
        + inv
            * inv2
            * (1.0 / 6.0
                - inv2
                    * (1.0 / 30.0
                        - inv2
                            * (1.0 / 42.0
                                - inv2
                                    * (1.0 / 30.0
                                        - inv2
                                            * (5.0 / 66.0
                                                - inv2 * (691.0 / 2730.0 - inv2 * 7.0 / 6.0))))));
    acc + tail
}

/// log Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return domain(format!("ln_gamma requires a positive finite argument, got {x}"));
    }
    Ok(statrs::function::gamma::ln_gamma(x))
}

/// log B(α, β) = log Γ(α) + log Γ(β) − log Γ(α+β).
pub fn log_beta(alpha: f64, beta: f64) -> Result<f64> {
    if !(alpha > 0.0 && beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
        return domain(format!(
            "log_beta requires positive finite arguments, got ({alpha}, {beta})"
        ));
    }
    Ok(log_beta_positive(alpha, beta))
}

pub(crate) fn log_beta_positive(alpha: f64, beta: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    ln_gamma(alpha) + ln_gamma(beta) - ln_gamma(alpha + beta)
}

/// log(1 + eˣ) without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic function 1 / (1 + e⁻ˣ).
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log σ(x) = −softplus(−x).
#[inline]
pub fn log_logistic(x: f64) -> f64 {
    -softplus(-x)
}

/// log(1 − eˣ) for x ≤ 0, accurate at both ends of the range.
#[inline]
pub fn log1mexp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// log Σ exp(xᵢ); −∞ for an empty or all −∞ input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
