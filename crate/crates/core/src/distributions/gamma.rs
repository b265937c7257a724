use std::sync::atomic::{AtomicBool, Ordering};

use super::beta::beta_log_pdf_from_logs;
use super::{check_positive, check_unit_open, BetaParams};
use crate::error::{Error, Result};
use crate::numerics::special::{
    digamma_positive, log_beta_positive, log_logistic, logistic,
};

/// Upper bound applied to Gamma shapes. The small-shape inverse-CDF
/// approximation degrades quickly above one.
pub const GAMMA_SHAPE_CAP: f64 = 1.0;

static CAP_WARNED: AtomicBool = AtomicBool::new(false);

/// Shapes of the two unit-scale Gamma draws whose ratio `x / (x + y)`
/// approximates a Beta(shape_x, shape_y) fraction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaCompositionParams {
    shape_x: f64,
    shape_y: f64,
}

impl GammaCompositionParams {
    pub fn new(shape_x: f64, shape_y: f64) -> Result<Self> {
        check_positive(shape_x, "Gamma shape_x")?;
        check_positive(shape_y, "Gamma shape_y")?;
        Ok(Self { shape_x, shape_y })
    }

    /// Shapes from unconstrained outputs (`softplus + 1e-4`, capped at
    /// [`GAMMA_SHAPE_CAP`]) plus the derivative of each map. A capped shape
    /// has zero derivative.
    pub fn from_unconstrained(tx: f64, ty: f64) -> (Self, f64, f64) {
        let (shape_x, dx) = capped_shape(tx);
        let (shape_y, dy) = capped_shape(ty);
        (Self { shape_x, shape_y }, dx, dy)
    }

    pub fn shape_x(&self) -> f64 {
        self.shape_x
    }

    pub fn shape_y(&self) -> f64 {
        self.shape_y
    }
}

fn capped_shape(t: f64) -> (f64, f64) {
    let s = super::positive_from_unconstrained(t);
    if s > GAMMA_SHAPE_CAP {
        if !CAP_WARNED.swap(true, Ordering::Relaxed) {
            log::warn!(
                "Gamma shape {s:.4} capped at {GAMMA_SHAPE_CAP}; the inverse-CDF approximation \
                 is only used in the small-shape regime"
            );
        }
        (GAMMA_SHAPE_CAP, 0.0)
    } else {
        (s, super::positive_from_unconstrained_grad(t))
    }
}

/// Small-shape approximation of the Gamma(shape, scale) inverse CDF:
/// `(u · a · Γ(a))^{1/a} / b`.
pub fn gamma_approx_inverse_cdf(u: f64, shape: f64, scale: f64) -> Result<f64> {
    check_unit_open(u, "uniform draw")?;
    check_positive(shape, "Gamma shape")?;
    check_positive(scale, "Gamma scale")?;
    Ok(log_gamma_approx_inverse_cdf(u, shape).exp() / scale)
}

/// Logarithm of the unit-scale approximation, `(log u + log Γ(a + 1)) / a`.
pub fn log_gamma_approx_inverse_cdf(u: f64, shape: f64) -> f64 {
    (u.ln() + statrs::function::gamma::ln_gamma(shape + 1.0)) / shape
}

// d/da of log_gamma_approx_inverse_cdf
fn log_inverse_cdf_shape_grad(log_x: f64, shape: f64) -> f64 {
    (digamma_positive(shape + 1.0) - log_x) / shape
}

/// A composed fraction kept on the logit scale: `v = σ(log x − log y)`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct GammaDraw {
    pub logit: f64,
    pub value: f64,
    pub log_value: f64,
    pub log_one_minus: f64,
    /// ∂logit/∂shape_x and ∂logit/∂shape_y
    pub dlogit_dx: f64,
    pub dlogit_dy: f64,
}

pub(crate) fn compose_draw(u_x: f64, u_y: f64, p: GammaCompositionParams) -> GammaDraw {
    let lx = log_gamma_approx_inverse_cdf(u_x, p.shape_x);
    let ly = log_gamma_approx_inverse_cdf(u_y, p.shape_y);
    let logit = lx - ly;
    GammaDraw {
        logit,
        value: logistic(logit),
        log_value: log_logistic(logit),
        log_one_minus: log_logistic(-logit),
        dlogit_dx: log_inverse_cdf_shape_grad(lx, p.shape_x),
        dlogit_dy: -log_inverse_cdf_shape_grad(ly, p.shape_y),
    }
}

/// `v = x / (x + y)` with `x`, `y` from [`gamma_approx_inverse_cdf`] at unit
/// scale. Computed as a logistic of `log x − log y` so tiny shapes do not
/// underflow; a result that still rounds to 0 or 1 is a numeric error.
pub fn gamma_composition_fraction(u_x: f64, u_y: f64, p: GammaCompositionParams) -> Result<f64> {
    check_unit_open(u_x, "uniform draw u_x")?;
    check_unit_open(u_y, "uniform draw u_y")?;
    let d = compose_draw(u_x, u_y, p);
    if !(d.value > 0.0 && d.value < 1.0) {
        return Err(Error::Numeric(format!(
            "Gamma composition saturated (log x − log y = {}) for shapes ({}, {})",
            d.logit, p.shape_x, p.shape_y
        )));
    }
    Ok(d.value)
}

/// `(∂v/∂shape_x, ∂v/∂shape_y)` at fixed noise.
pub fn gamma_composition_fraction_grad(
    u_x: f64,
    u_y: f64,
    p: GammaCompositionParams,
) -> Result<(f64, f64)> {
    let v = gamma_composition_fraction(u_x, u_y, p)?;
    let d = compose_draw(u_x, u_y, p);
    let slope = v * (1.0 - v);
    Ok((slope * d.dlogit_dx, slope * d.dlogit_dy))
}

/// Single-sample KL estimate `log Beta(v; shape_x, shape_y) − log p(v)`,
/// treating the composed fraction as a draw from the Beta it approximates.
pub fn gamma_composition_kl_estimate(
    p: GammaCompositionParams,
    prior: BetaParams,
    v: f64,
) -> Result<f64> {
    check_unit_open(v, "fraction sample")?;
    let (lv, l1v) = (v.ln(), (-v).ln_1p());
    let q = BetaParams::new(p.shape_x, p.shape_y)?;
    Ok(beta_log_pdf_from_logs(lv, l1v, q) - beta_log_pdf_from_logs(lv, l1v, prior))
}

/// KL estimate for a draw plus its partials: explicit ∂/∂shape_x,
/// ∂/∂shape_y at fixed `v`, and ∂/∂logit.
pub(crate) fn kl_estimate_with_grad(
    p: GammaCompositionParams,
    prior: BetaParams,
    d: &GammaDraw,
) -> (f64, f64, f64, f64) {
    let (ax, ay) = (p.shape_x, p.shape_y);
    let (alpha, beta) = (prior.alpha(), prior.beta());
    let kl = (ax - 1.0) * d.log_value + (ay - 1.0) * d.log_one_minus
        - log_beta_positive(ax, ay)
        - (alpha - 1.0) * d.log_value
        - (beta - 1.0) * d.log_one_minus
        + log_beta_positive(alpha, beta);
    let psi_sum = digamma_positive(ax + ay);
    let d_ax = d.log_value - digamma_positive(ax) + psi_sum;
    let d_ay = d.log_one_minus - digamma_positive(ay) + psi_sum;
    let d_logit = (ax - alpha) * (1.0 - d.value) - (ay - beta) * d.value;
    (kl, d_ax, d_ay, d_logit)
}
