//! Fraction-level distributions and divergences.
//!
//! Every stick fraction `v ∈ (0, 1)` in an SB-VAE is drawn from one of three
//! reparameterizable families: the Kumaraswamy (closed-form inverse CDF),
//! a ratio of approximately-inverted Gamma draws, or a logistic-squashed
//! Gaussian. The Gauss VAE baseline uses a diagonal Gaussian.

pub(crate) mod beta;
pub(crate) mod gamma;
mod gauss_logit;
mod gaussian;
pub(crate) mod kumaraswamy;

pub use beta::{beta1_quantile, beta_log_pdf, BetaParams};
pub use gamma::{
    gamma_approx_inverse_cdf, gamma_composition_fraction, gamma_composition_fraction_grad,
    gamma_composition_kl_estimate, log_gamma_approx_inverse_cdf, GammaCompositionParams,
    GAMMA_SHAPE_CAP,
};
pub use gauss_logit::{
    gauss_logit_fraction, kl_gauss_logit, kl_gauss_logit_from_noise, logistic_normal_log_pdf,
};
pub use gaussian::{
    diag_gaussian_log_pdf, kl_diag_gaussian_std_normal, std_normal_log_pdf, GaussianParams,
};
pub use kumaraswamy::{
    kl_kumaraswamy_beta, kl_kumaraswamy_beta_grad, kumaraswamy_cdf, kumaraswamy_inverse_cdf,
    kumaraswamy_inverse_cdf_grad, kumaraswamy_log_pdf, kumaraswamy_mean, KumaraswamyParams,
    DEFAULT_KL_TERMS,
};

use crate::numerics::special::{logistic, softplus};

/// Added to softplus outputs so shape and scale parameters stay bounded
/// away from zero.
pub const POSITIVITY_FLOOR: f64 = 1e-4;

/// Maps an unconstrained network output to a positive parameter:
/// `softplus(t) + 1e-4`.
#[inline]
pub fn positive_from_unconstrained(t: f64) -> f64 {
    softplus(t) + POSITIVITY_FLOOR
}

/// Derivative of [`positive_from_unconstrained`].
#[inline]
pub fn positive_from_unconstrained_grad(t: f64) -> f64 {
    logistic(t)
}

pub(crate) fn check_unit_open(x: f64, what: &str) -> crate::Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(crate::Error::Domain(format!("{what} must lie in (0, 1), got {x}")))
    }
}

pub(crate) fn check_positive(x: f64, what: &str) -> crate::Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(crate::Error::Domain(format!("{what} must be positive and finite, got {x}")))
    }
}
