use super::{check_positive, check_unit_open};
use crate::numerics::special::log_beta_positive;
use crate::Result;

/// Beta(α, β) parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaParams {
    alpha: f64,
    beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        check_positive(alpha, "Beta alpha")?;
        check_positive(beta, "Beta beta")?;
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

/// log Beta(x; α, β).
pub fn beta_log_pdf(x: f64, p: BetaParams) -> Result<f64> {
    check_unit_open(x, "Beta argument")?;
    Ok(beta_log_pdf_from_logs(x.ln(), (-x).ln_1p(), p))
}

/// Same density, taking `log x` and `log(1 − x)` directly so callers
/// working on the logit scale never round `x` to 0 or 1.
pub(crate) fn beta_log_pdf_from_logs(log_x: f64, log_1mx: f64, p: BetaParams) -> f64 {
    let mut lp = -log_beta_positive(p.alpha, p.beta);
    if p.alpha != 1.0 {
        lp += (p.alpha - 1.0) * log_x;
    }
    if p.beta != 1.0 {
        lp += (p.beta - 1.0) * log_1mx;
    }
    lp
}

/// Exact quantile of Beta(1, β): `1 − (1 − u)^{1/β}`.
pub fn beta1_quantile(u: f64, beta: f64) -> Result<f64> {
    check_unit_open(u, "uniform draw")?;
    check_positive(beta, "Beta beta")?;
    Ok(-((-u).ln_1p() / beta).exp_m1())
}
