//! Posterior parameters, reparameterized sampling, KL terms and their
//! reverse-mode rules for each latent family.
//!
//! Every family has two natural parameters per stochastic coordinate
//! (μ/σ, a/b, shape_x/shape_y) produced from two blocks of encoder outputs.
//! Gradients are first taken with respect to the natural parameters and
//! then chained through the output maps.

use super::spec::{FractionParam, LatentPrior, ModelSpec, Variant};
use crate::distributions::gamma::{compose_draw, kl_estimate_with_grad};
use crate::distributions::kumaraswamy::{inverse_cdf_grad_unchecked, sample_logs};
use crate::distributions::{
    kl_gauss_logit_from_noise, kl_kumaraswamy_beta, kl_kumaraswamy_beta_grad,
    positive_from_unconstrained, positive_from_unconstrained_grad, BetaParams,
    GammaCompositionParams, KumaraswamyParams, DEFAULT_KL_TERMS,
};
use crate::error::{Error, Result};
use crate::numerics::special::logistic;
use crate::numerics::{draw_standard_normal, draw_uniform, DenseMatrix, RngState};
use crate::stick::{compose_into, compose_vjp, gem_prior_fraction_params};

/// Noise for `S` latent samples of a batch: one `N × noise_dim` matrix per
/// sample. Replaying the same noise makes objectives deterministic
/// functions of the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Noise {
    samples: Vec<DenseMatrix>,
}

impl Noise {
    pub fn draw(spec: &ModelSpec, rows: usize, rng: &mut RngState) -> Self {
        Self::draw_samples(spec, rows, spec.mc_samples(), rng)
    }

    pub fn draw_samples(spec: &ModelSpec, rows: usize, samples: usize, rng: &mut RngState) -> Self {
        let cols = spec.noise_dim();
        let gaussian = matches!(
            (spec.variant(), spec.fraction_param()),
            (Variant::GaussVae, _) | (_, Some(FractionParam::GaussLogit))
        );
        let samples = (0..samples)
            .map(|_| {
                if gaussian {
                    draw_standard_normal(rng, rows, cols)
                } else {
                    draw_uniform(rng, rows, cols)
                }
            })
            .collect();
        Self { samples }
    }

    pub fn from_samples(spec: &ModelSpec, samples: Vec<DenseMatrix>) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::Dimension("noise needs at least one sample".into()));
        };
        let rows = first.rows();
        if samples.iter().any(|s| s.shape() != (rows, spec.noise_dim())) {
            return Err(Error::Dimension(format!(
                "every noise sample must be {rows}x{}",
                spec.noise_dim()
            )));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[DenseMatrix] {
        &self.samples
    }

    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn rows(&self) -> usize {
        self.samples[0].rows()
    }
}

/// Per-example posterior parameters (`N × stochastic_dim` each).
#[derive(Clone, Debug, PartialEq)]
pub enum Posterior {
    Gaussian { mu: DenseMatrix, sigma: DenseMatrix },
    Kumaraswamy { a: DenseMatrix, b: DenseMatrix },
    Gamma { shape_x: DenseMatrix, shape_y: DenseMatrix },
    GaussLogit { mu: DenseMatrix, sigma: DenseMatrix },
}

impl Posterior {
    fn pair(&self) -> (&DenseMatrix, &DenseMatrix) {
        match self {
            Posterior::Gaussian { mu, sigma } | Posterior::GaussLogit { mu, sigma } => (mu, sigma),
            Posterior::Kumaraswamy { a, b } => (a, b),
            Posterior::Gamma { shape_x, shape_y } => (shape_x, shape_y),
        }
    }

    pub fn rows(&self) -> usize {
        self.pair().0.rows()
    }
}

/// Posterior plus derivatives of each natural parameter with respect to the
/// encoder output that produced it.
pub(crate) struct PosteriorState {
    pub posterior: Posterior,
    pub d_first: DenseMatrix,
    pub d_second: DenseMatrix,
}

fn prior_fraction(spec: &ModelSpec) -> BetaParams {
    match spec.prior() {
        LatentPrior::Gem(g) => gem_prior_fraction_params(g),
        LatentPrior::StandardNormal => unreachable!("stick-breaking models carry a GEM prior"),
    }
}

fn numeric_row(what: &str, row: usize) -> Error {
    Error::Numeric(format!("{what} is not finite for batch row {row}"))
}

/// Reads the two parameter blocks from the encoder output.
pub(crate) fn posterior_from_encoder(spec: &ModelSpec, enc_out: &DenseMatrix) -> Result<PosteriorState> {
    let n = spec.stochastic_dim();
    let rows = enc_out.rows();
    let t1 = enc_out.column_block(0, n);
    let t2 = enc_out.column_block(n, 2 * n);
    let ones = DenseMatrix::filled(rows, n, 1.0);
    let state = match (spec.variant(), spec.fraction_param()) {
        (Variant::GaussVae, _) => {
            // σ = exp(t / 2)
            let sigma = t2.map(|t| (0.5 * t).exp());
            let d_sigma = sigma.map(|s| 0.5 * s);
            PosteriorState {
                posterior: Posterior::Gaussian { mu: t1, sigma },
                d_first: ones,
                d_second: d_sigma,
            }
        }
        (Variant::SbVae, Some(FractionParam::Kumaraswamy)) => PosteriorState {
            posterior: Posterior::Kumaraswamy {
                a: t1.map(positive_from_unconstrained),
                b: t2.map(positive_from_unconstrained),
            },
            d_first: t1.map(positive_from_unconstrained_grad),
            d_second: t2.map(positive_from_unconstrained_grad),
        },
        (Variant::SbVae, Some(FractionParam::GaussLogit)) => PosteriorState {
            posterior: Posterior::GaussLogit {
                sigma: t2.map(positive_from_unconstrained),
                mu: t1,
            },
            d_first: ones,
            d_second: t2.map(positive_from_unconstrained_grad),
        },
        (Variant::SbVae, Some(FractionParam::Gamma)) => {
            let mut sx = DenseMatrix::zeros(rows, n);
            let mut sy = DenseMatrix::zeros(rows, n);
            let mut dx = DenseMatrix::zeros(rows, n);
            let mut dy = DenseMatrix::zeros(rows, n);
            for i in 0..rows {
                for k in 0..n {
                    let (p, gx, gy) = GammaCompositionParams::from_unconstrained(t1.get(i, k), t2.get(i, k));
                    sx.set(i, k, p.shape_x());
                    sy.set(i, k, p.shape_y());
                    dx.set(i, k, gx);
                    dy.set(i, k, gy);
                }
            }
            PosteriorState {
                posterior: Posterior::Gamma { shape_x: sx, shape_y: sy },
                d_first: dx,
                d_second: dy,
            }
        }
        (Variant::SbVae, None) => unreachable!("SB-VAE specs always name a parametrization"),
    };
    let (p1, p2) = state.posterior.pair();
    for i in 0..rows {
        if !p1.row(i).iter().chain(p2.row(i)).all(|v| v.is_finite()) {
            return Err(numeric_row("posterior parameter", i));
        }
    }
    Ok(state)
}

/// Closed-form KL per row with gradients wrt the natural parameters, for
/// the families that have one (Gaussian, Kumaraswamy). `None` means the KL
/// is estimated from each latent sample instead.
pub(crate) fn analytic_kl(
    spec: &ModelSpec,
    post: &Posterior,
) -> Result<Option<(Vec<f64>, DenseMatrix, DenseMatrix)>> {
    let (rows, n) = post.pair().0.shape();
    let mut kl = vec![0.0; rows];
    let mut g1 = DenseMatrix::zeros(rows, n);
    let mut g2 = DenseMatrix::zeros(rows, n);
    match post {
        Posterior::Gaussian { mu, sigma } => {
            for i in 0..rows {
                for k in 0..n {
                    let (m, s) = (mu.get(i, k), sigma.get(i, k));
                    kl[i] += 0.5 * (m * m + s * s - 1.0) - s.ln();
                    g1.set(i, k, m);
                    g2.set(i, k, s - 1.0 / s);
                }
            }
        }
        Posterior::Kumaraswamy { a, b } => {
            let prior = prior_fraction(spec);
            for i in 0..rows {
                for k in 0..n {
                    let q = KumaraswamyParams::new(a.get(i, k), b.get(i, k))?;
                    kl[i] += kl_kumaraswamy_beta(q, prior, DEFAULT_KL_TERMS)?;
                    let (da, db) = kl_kumaraswamy_beta_grad(q, prior, DEFAULT_KL_TERMS)?;
                    g1.set(i, k, da);
                    g2.set(i, k, db);
                }
            }
        }
        Posterior::Gamma { .. } | Posterior::GaussLogit { .. } => return Ok(None),
    }
    if let Some(i) = kl.iter().position(|v| !v.is_finite()) {
        return Err(numeric_row("KL", i));
    }
    Ok(Some((kl, g1, g2)))
}

/// One reparameterized latent sample for a batch with everything needed to
/// backpropagate through it.
pub(crate) struct LatentSample {
    /// `N × latent_dim`: Gaussian code or stick weights π.
    pub latent: DenseMatrix,
    /// Gaussian code or the `K − 1` stochastic fractions.
    pub stochastic: DenseMatrix,
    /// ∂(stochastic)/∂(first, second natural parameter).
    pub ds_d1: DenseMatrix,
    pub ds_d2: DenseMatrix,
    /// log q − log p of this sample per row (fraction space for sticks).
    /// May be infinite for a Kumaraswamy draw that rounds to 0 or 1.
    pub log_ratio: Vec<f64>,
    /// Gradient of `log_ratio` wrt the natural parameters along the sample
    /// path; only filled for families whose KL is estimated by sampling.
    pub mc_kl_grad: Option<(DenseMatrix, DenseMatrix)>,
}

pub(crate) fn sample_latent(spec: &ModelSpec, post: &Posterior, noise: &DenseMatrix) -> Result<LatentSample> {
    let (rows, n) = post.pair().0.shape();
    if noise.shape() != (rows, spec.noise_dim()) {
        return Err(Error::Dimension(format!(
            "noise is {:?}, expected {:?}",
            noise.shape(),
            (rows, spec.noise_dim())
        )));
    }
    let mut s = DenseMatrix::zeros(rows, n);
    let mut d1 = DenseMatrix::zeros(rows, n);
    let mut d2 = DenseMatrix::zeros(rows, n);
    let mut log_ratio = vec![0.0; rows];
    let mut mc_grad = None;
    match post {
        Posterior::Gaussian { mu, sigma } => {
            for i in 0..rows {
                for k in 0..n {
                    let (m, sd, e) = (mu.get(i, k), sigma.get(i, k), noise.get(i, k));
                    let z = m + sd * e;
                    s.set(i, k, z);
                    d1.set(i, k, 1.0);
                    d2.set(i, k, e);
                    log_ratio[i] += -0.5 * e * e - sd.ln() + 0.5 * z * z;
                }
            }
        }
        Posterior::Kumaraswamy { a, b } => {
            let prior = prior_fraction(spec);
            for i in 0..rows {
                for k in 0..n {
                    let q = KumaraswamyParams::new(a.get(i, k), b.get(i, k))?;
                    let u = noise.get(i, k);
                    let draw = sample_logs(u, q);
                    let (da, db) = inverse_cdf_grad_unchecked(u, q);
                    s.set(i, k, draw.value);
                    d1.set(i, k, da);
                    d2.set(i, k, db);
                    log_ratio[i] += draw.log_density
                        - crate::distributions::beta::beta_log_pdf_from_logs(
                            draw.log_value,
                            draw.log_one_minus,
                            prior,
                        );
                }
            }
        }
        Posterior::GaussLogit { mu, sigma } => {
            let prior = prior_fraction(spec);
            let mut g1 = DenseMatrix::zeros(rows, n);
            let mut g2 = DenseMatrix::zeros(rows, n);
            for i in 0..rows {
                for k in 0..n {
                    let (m, sd, e) = (mu.get(i, k), sigma.get(i, k), noise.get(i, k));
                    let v = logistic(m + sd * e);
                    let slope = v * (1.0 - v);
                    s.set(i, k, v);
                    d1.set(i, k, slope);
                    d2.set(i, k, slope * e);
                    let (kl, dm, ds) = kl_gauss_logit_from_noise(e, m, sd, prior);
                    log_ratio[i] += kl;
                    g1.set(i, k, dm);
                    g2.set(i, k, ds);
                }
            }
            mc_grad = Some((g1, g2));
        }
        Posterior::Gamma { shape_x, shape_y } => {
            let prior = prior_fraction(spec);
            let mut g1 = DenseMatrix::zeros(rows, n);
            let mut g2 = DenseMatrix::zeros(rows, n);
            for i in 0..rows {
                for k in 0..n {
                    let p = GammaCompositionParams::new(shape_x.get(i, k), shape_y.get(i, k))?;
                    let draw = compose_draw(noise.get(i, k), noise.get(i, n + k), p);
                    let slope = draw.value * (1.0 - draw.value);
                    s.set(i, k, draw.value);
                    d1.set(i, k, slope * draw.dlogit_dx);
                    d2.set(i, k, slope * draw.dlogit_dy);
                    let (kl, dx, dy, dlogit) = kl_estimate_with_grad(p, prior, &draw);
                    log_ratio[i] += kl;
                    g1.set(i, k, dx + dlogit * draw.dlogit_dx);
                    g2.set(i, k, dy + dlogit * draw.dlogit_dy);
                }
            }
            mc_grad = Some((g1, g2));
        }
    }
    let latent = match spec.variant() {
        Variant::GaussVae => s.clone(),
        Variant::SbVae => {
            let mut pi = DenseMatrix::zeros(rows, n + 1);
            for i in 0..rows {
                compose_into(s.row(i), pi.row_mut(i));
            }
            pi
        }
    };
    for i in 0..rows {
        if !latent.row(i).iter().all(|v| v.is_finite()) {
            return Err(numeric_row("latent sample", i));
        }
    }
    Ok(LatentSample {
        latent,
        stochastic: s,
        ds_d1: d1,
        ds_d2: d2,
        log_ratio,
        mc_kl_grad: mc_grad,
    })
}

/// Adds to `(g1, g2)` the natural-parameter gradient implied by
/// `d_latent = ∂J/∂latent` for this sample.
pub(crate) fn latent_backward(
    spec: &ModelSpec,
    sample: &LatentSample,
    d_latent: &DenseMatrix,
    g1: &mut DenseMatrix,
    g2: &mut DenseMatrix,
) {
    let (rows, n) = sample.stochastic.shape();
    let mut ds = vec![0.0; n];
    for i in 0..rows {
        match spec.variant() {
            Variant::GaussVae => ds.copy_from_slice(d_latent.row(i)),
            Variant::SbVae => compose_vjp(sample.stochastic.row(i), d_latent.row(i), &mut ds),
        }
        let (r1, r2) = (sample.ds_d1.row(i), sample.ds_d2.row(i));
        let o1 = g1.row_mut(i);
        for k in 0..n {
            o1[k] += ds[k] * r1[k];
        }
        let o2 = g2.row_mut(i);
        for k in 0..n {
            o2[k] += ds[k] * r2[k];
        }
    }
}

/// Posterior-mean code: Gaussian μ, or sticks composed from the fraction
/// means. Gamma fractions use the mean `a_x / (a_x + a_y)` of the Beta they
/// approximate; logistic-normal fractions use `σ(μ)` (the median), which has
/// no closed-form mean.
pub(crate) fn posterior_mean_latent(post: &Posterior) -> DenseMatrix {
    let (p1, p2) = post.pair();
    let (rows, n) = p1.shape();
    let frac = |i: usize, k: usize| -> f64 {
        let (x, y) = (p1.get(i, k), p2.get(i, k));
        match post {
            Posterior::Kumaraswamy { .. } => {
                crate::distributions::kumaraswamy_mean(KumaraswamyParams::new(x, y).expect("validated"))
            }
            Posterior::Gamma { .. } => x / (x + y),
            Posterior::GaussLogit { .. } => logistic(x),
            Posterior::Gaussian { .. } => x,
        }
    };
    if let Posterior::Gaussian { mu, .. } = post {
        return mu.clone();
    }
    let mut pi = DenseMatrix::zeros(rows, n + 1);
    let mut v = vec![0.0; n];
    for i in 0..rows {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = frac(i, k);
        }
        compose_into(&v, pi.row_mut(i));
    }
    pi
}
