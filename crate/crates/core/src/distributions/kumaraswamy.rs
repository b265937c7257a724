use super::{check_positive, check_unit_open, BetaParams};
use crate::error::{Error, Result};
use crate::numerics::special::{
    digamma_positive, log1mexp, log_beta_positive, trigamma_positive, EULER_GAMMA,
};

/// Number of series terms used for E_q[log(1 − v)] in the
/// Kumaraswamy-to-Beta KL unless configured otherwise.
pub const DEFAULT_KL_TERMS: usize = 10;

/// Kumaraswamy(a, b) on (0, 1): density `a b x^{a−1} (1 − x^a)^{b−1}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KumaraswamyParams {
    a: f64,
    b: f64,
}

impl KumaraswamyParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        check_positive(a, "Kumaraswamy a")?;
        check_positive(b, "Kumaraswamy b")?;
        Ok(Self { a, b })
    }

    /// Shapes from unconstrained encoder outputs via `softplus + 1e-4`.
    pub fn from_unconstrained(ta: f64, tb: f64) -> Self {
        Self {
            a: super::positive_from_unconstrained(ta),
            b: super::positive_from_unconstrained(tb),
        }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

/// Inverse transform `x = (1 − u^{1/b})^{1/a}`.
///
/// `u` enters through the survival function: CDF(x) = 1 − u, so `x` is
/// strictly decreasing in `u`. Since 1 − u is also uniform the draw has
/// the Kumaraswamy law either way.
pub fn kumaraswamy_inverse_cdf(u: f64, p: KumaraswamyParams) -> Result<f64> {
    check_unit_open(u, "uniform draw")?;
    Ok(sample_logs(u, p).value)
}

/// `(∂x/∂a, ∂x/∂b)` of the inverse transform at fixed `u`.
pub fn kumaraswamy_inverse_cdf_grad(u: f64, p: KumaraswamyParams) -> Result<(f64, f64)> {
    check_unit_open(u, "uniform draw")?;
    Ok(inverse_cdf_grad_unchecked(u, p))
}

pub(crate) fn inverse_cdf_grad_unchecked(u: f64, p: KumaraswamyParams) -> (f64, f64) {
    let (a, b) = (p.a, p.b);
    let ln_u = u.ln();
    let c = ln_u / b;
    let ln_w = log1mexp(c); // log(1 − u^{1/b})
    if ln_w == f64::NEG_INFINITY {
        return (0.0, 0.0);
    }
    let x = (ln_w / a).exp();
    let dx_da = -x * ln_w / (a * a);
    // x / w · u^{1/b}, formed in log space
    let dx_db = (ln_w / a - ln_w + c).exp() / a * ln_u / (b * b);
    (dx_da, dx_db)
}

/// A reparameterized draw together with the logarithms the objectives need.
#[derive(Clone, Copy, Debug)]
pub(crate) struct KumaraswamyDraw {
    pub value: f64,
    pub log_value: f64,
    pub log_one_minus: f64,
    pub log_density: f64,
}

pub(crate) fn sample_logs(u: f64, p: KumaraswamyParams) -> KumaraswamyDraw {
    let (a, b) = (p.a, p.b);
    let ln_u = u.ln();
    // 1 − x^a = u^{1/b}, so log(1 − x^a) is available exactly
    let log_1m_xa = ln_u / b;
    let log_value = log1mexp(log_1m_xa) / a;
    let value = log_value.exp();
    let log_one_minus = log1mexp(log_value);
    let log_density = a.ln() + b.ln() + (a - 1.0) * log_value + (b - 1.0) * log_1m_xa;
    KumaraswamyDraw {
        value,
        log_value,
        log_one_minus,
        log_density,
    }
}

/// CDF `1 − (1 − x^a)^b`.
pub fn kumaraswamy_cdf(x: f64, p: KumaraswamyParams) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let log_1m_xa = (-(p.a * x.ln()).exp()).ln_1p();
    -(p.b * log_1m_xa).exp_m1()
}

pub fn kumaraswamy_log_pdf(x: f64, p: KumaraswamyParams) -> Result<f64> {
    check_unit_open(x, "Kumaraswamy argument")?;
    let (a, b) = (p.a, p.b);
    let log_1m_xa = (-(a * x.ln()).exp()).ln_1p();
    Ok(a.ln() + b.ln() + (a - 1.0) * x.ln() + (b - 1.0) * log_1m_xa)
}

/// Mean `b · B(1 + 1/a, b)`.
pub fn kumaraswamy_mean(p: KumaraswamyParams) -> f64 {
    p.b * log_beta_positive(1.0 + 1.0 / p.a, p.b).exp()
}

/// KL(Kumaraswamy(a, b) ‖ Beta(α, β)) with E_q[log(1 − v)] expanded as a
/// series truncated after `terms` terms:
///
/// ```text
/// (a−α)/a · (−γ − Ψ(b) − 1/b) + log ab + log B(α, β) − (b−1)/b
///     + (β−1) · b · Σ_{m=1}^{terms} B(m/a, b) / (m + ab)
/// ```
///
/// The truncation drops positive terms, so for β > 1 the value
/// under-estimates the exact divergence (and over-estimates it for β < 1).
/// The shortfall decays like `(a/terms)^b`, which is slow for large `a`
/// and small `b`.
pub fn kl_kumaraswamy_beta(q: KumaraswamyParams, p: BetaParams, terms: usize) -> Result<f64> {
    check_terms(terms)?;
    let (a, b) = (q.a, q.b);
    let (alpha, beta) = (p.alpha(), p.beta());
    let mut series = 0.0;
    for m in 1..=terms {
        let m = m as f64;
        series += log_beta_positive(m / a, b).exp() / (m + a * b);
    }
    let kl = (a - alpha) / a * (-EULER_GAMMA - digamma_positive(b) - 1.0 / b)
        + (a * b).ln()
        + log_beta_positive(alpha, beta)
        - (b - 1.0) / b
        + (beta - 1.0) * b * series;
    if !kl.is_finite() {
        return Err(non_finite("KL", q, p));
    }
    Ok(kl)
}

/// `(∂KL/∂a, ∂KL/∂b)` of the truncated series in [`kl_kumaraswamy_beta`].
pub fn kl_kumaraswamy_beta_grad(
    q: KumaraswamyParams,
    p: BetaParams,
    terms: usize,
) -> Result<(f64, f64)> {
    check_terms(terms)?;
    let (a, b) = (q.a, q.b);
    let (alpha, beta) = (p.alpha(), p.beta());
    let psi_b = digamma_positive(b);
    let c = -EULER_GAMMA - psi_b - 1.0 / b;

    let mut series = 0.0;
    let mut d_series_da = 0.0;
    let mut d_series_db = 0.0;
    for m in 1..=terms {
        let m = m as f64;
        let r = m / a;
        let bm = log_beta_positive(r, b).exp();
        let denom = m + a * b;
        let psi_sum = digamma_positive(r + b);
        let dbm_da = bm * (digamma_positive(r) - psi_sum) * (-m / (a * a));
        let dbm_db = bm * (psi_b - psi_sum);
        series += bm / denom;
        d_series_da += dbm_da / denom - bm * b / (denom * denom);
        d_series_db += dbm_db / denom - bm * a / (denom * denom);
    }

    let d_a = alpha / (a * a) * c + 1.0 / a + (beta - 1.0) * b * d_series_da;
    let d_b = (a - alpha) / a * (-trigamma_positive(b) + 1.0 / (b * b)) + 1.0 / b
        - 1.0 / (b * b)
        + (beta - 1.0) * (series + b * d_series_db);
    if !d_a.is_finite() || !d_b.is_finite() {
        return Err(non_finite("KL gradient", q, p));
    }
    Ok((d_a, d_b))
}

fn check_terms(terms: usize) -> Result<()> {
    if terms == 0 {
        return Err(Error::Domain("KL series needs at least one term".into()));
    }
    Ok(())
}

fn non_finite(what: &str, q: KumaraswamyParams, p: BetaParams) -> Error {
    Error::Numeric(format!(
        "{what} not finite for Kumaraswamy(a={}, b={}) vs Beta(alpha={}, beta={})",
        q.a,
        q.b,
        p.alpha(),
        p.beta()
    ))
}
