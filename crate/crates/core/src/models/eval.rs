use super::latent::{
    analytic_kl, posterior_from_encoder, posterior_mean_latent, sample_latent, Noise, Posterior,
};
use super::params::ModelParams;
use super::spec::{ModelSpec, Variant};
use crate::distributions::beta1_quantile;
use crate::error::{Error, Result};
use crate::nn::{bernoulli_log_likelihood, mlp_forward, softmax_rows};
use crate::numerics::special::{log_sum_exp, logistic};
use crate::numerics::{DenseMatrix, RngState};
use crate::stick::compose_into;

/// Result of pushing a batch through the inference network once.
#[derive(Clone, Debug)]
pub struct Encoding {
    pub posterior: Posterior,
    /// One reparameterized latent sample per row (`N × latent_dim`).
    pub latent: DenseMatrix,
    /// KL per row: closed form where available, otherwise the single-sample
    /// estimate at `latent`.
    pub kl: Vec<f64>,
    /// `q(y|x)` for semi-supervised models.
    pub class_probs: Option<DenseMatrix>,
}

fn encoder_output(spec: &ModelSpec, params: &ModelParams, x: &DenseMatrix) -> Result<DenseMatrix> {
    params.check_shapes(spec)?;
    Ok(mlp_forward(&params.encoder, &spec.encoder_config(), x)?.1)
}

pub fn encode(spec: &ModelSpec, params: &ModelParams, x: &DenseMatrix, rng: &mut RngState) -> Result<Encoding> {
    let out = encoder_output(spec, params, x)?;
    let state = posterior_from_encoder(spec, &out)?;
    let noise = Noise::draw_samples(spec, x.rows(), 1, rng);
    let sample = sample_latent(spec, &state.posterior, &noise.samples()[0])?;
    let kl = match analytic_kl(spec, &state.posterior)? {
        Some((kl, _, _)) => kl,
        None => sample.log_ratio.clone(),
    };
    let n = spec.stochastic_dim();
    let class_probs = (spec.classes() > 0)
        .then(|| softmax_rows(&out.column_block(2 * n, 2 * n + spec.classes())));
    Ok(Encoding {
        posterior: state.posterior,
        latent: sample.latent,
        kl,
        class_probs,
    })
}

/// Posterior parameters for each row, without sampling.
pub fn encode_posterior(spec: &ModelSpec, params: &ModelParams, x: &DenseMatrix) -> Result<Posterior> {
    let out = encoder_output(spec, params, x)?;
    Ok(posterior_from_encoder(spec, &out)?.posterior)
}

/// Deterministic codes: Gaussian means, or sticks composed from the
/// fraction means.
pub fn posterior_mean_latents(spec: &ModelSpec, params: &ModelParams, x: &DenseMatrix) -> Result<DenseMatrix> {
    let out = encoder_output(spec, params, x)?;
    Ok(posterior_mean_latent(&posterior_from_encoder(spec, &out)?.posterior))
}

/// Importance-sampled `log p(x)` per row: log-mean-exp over `samples`
/// draws of `log p(x|z) + log p(z) − log q(z|x)`. Stick-breaking densities
/// are taken over the `K − 1` fractions; Gamma-composition posteriors use
/// the Beta density they approximate as the proposal density.
pub fn marginal_log_likelihood_is(
    spec: &ModelSpec,
    params: &ModelParams,
    x: &DenseMatrix,
    rng: &mut RngState,
    samples: usize,
) -> Result<Vec<f64>> {
    if samples == 0 {
        return Err(Error::Domain("importance sampling needs at least one sample".into()));
    }
    if spec.classes() > 0 {
        return Err(Error::Contract(
            "importance-sampled likelihood is defined for unsupervised models".into(),
        ));
    }
    let out = encoder_output(spec, params, x)?;
    let state = posterior_from_encoder(spec, &out)?;
    let dec_cfg = spec.decoder_config();
    let rows = x.rows();
    let mut log_w = DenseMatrix::zeros(rows, samples);
    for s in 0..samples {
        let noise = Noise::draw_samples(spec, rows, 1, rng);
        let ls = sample_latent(spec, &state.posterior, &noise.samples()[0])?;
        let (_, logits) = mlp_forward(&params.decoder, &dec_cfg, &ls.latent)?;
        let ll = bernoulli_log_likelihood(&logits, x)?;
        for i in 0..rows {
            log_w.set(i, s, ll[i] - ls.log_ratio[i]);
        }
    }
    (0..rows)
        .map(|i| {
            let lse = log_sum_exp(log_w.row(i));
            if lse == f64::NEG_INFINITY {
                return Err(Error::Numeric(format!("all importance weights vanish for row {i}")));
            }
            if !lse.is_finite() {
                return Err(Error::Numeric(format!("importance weights are not finite for row {i}")));
            }
            Ok(lse - (samples as f64).ln())
        })
        .collect()
}

/// Latent codes drawn from the prior. With `active_dims = Some(m)` the code
/// is supported on the first `m` coordinates: stick fractions from index
/// `m − 1` on are forced to one (Gaussian coordinates beyond `m` are zero).
pub fn sample_prior_latents(
    spec: &ModelSpec,
    rng: &mut RngState,
    n: usize,
    active_dims: Option<usize>,
) -> Result<DenseMatrix> {
    let k = spec.latent_dim();
    let m = active_dims.unwrap_or(k);
    if m == 0 || m > k {
        return Err(Error::Domain(format!("active dimensions must lie in 1..={k}, got {m}")));
    }
    let mut z = DenseMatrix::zeros(n, k);
    match spec.variant() {
        Variant::GaussVae => {
            for i in 0..n {
                for j in 0..m {
                    z.set(i, j, rng.standard_normal());
                }
            }
        }
        Variant::SbVae => {
            let alpha0 = spec.alpha0().expect("stick-breaking prior");
            let mut v = vec![1.0; k - 1];
            for i in 0..n {
                for (j, vj) in v.iter_mut().enumerate() {
                    *vj = if j + 1 >= m { 1.0 } else { beta1_quantile(rng.uniform(), alpha0)? };
                }
                compose_into(&v, z.row_mut(i));
            }
        }
    }
    Ok(z)
}

/// Bernoulli means `σ(decoder(z, y))`. Semi-supervised models need one
/// label per row.
pub fn decode_means(
    spec: &ModelSpec,
    params: &ModelParams,
    latents: &DenseMatrix,
    labels: Option<&[usize]>,
) -> Result<DenseMatrix> {
    params.check_shapes(spec)?;
    let classes = spec.classes();
    let input = if classes == 0 {
        latents.clone()
    } else {
        let labels = labels.ok_or_else(|| Error::Contract("decoding needs labels for a semi-supervised model".into()))?;
        if labels.len() != latents.rows() {
            return Err(Error::Dimension(format!("{} labels for {} codes", labels.len(), latents.rows())));
        }
        let mut onehot = DenseMatrix::zeros(latents.rows(), classes);
        for (i, &y) in labels.iter().enumerate() {
            if y >= classes {
                return Err(Error::Domain(format!("label {y} outside 0..{classes}")));
            }
            onehot.set(i, y, 1.0);
        }
        latents.hconcat(&onehot)?
    };
    let (_, logits) = mlp_forward(&params.decoder, &spec.decoder_config(), &input)?;
    Ok(logits.map(logistic))
}

/// Decoded prior samples. Semi-supervised models cycle through the classes
/// (row `i` uses label `i mod C`).
pub fn sample_from_prior(
    spec: &ModelSpec,
    params: &ModelParams,
    rng: &mut RngState,
    n: usize,
    active_dims: Option<usize>,
) -> Result<DenseMatrix> {
    let z = sample_prior_latents(spec, rng, n, active_dims)?;
    let labels: Vec<usize> = (0..n).map(|i| i % spec.classes().max(1)).collect();
    decode_means(spec, params, &z, (spec.classes() > 0).then_some(&labels[..]))
}

pub fn class_probabilities(spec: &ModelSpec, params: &ModelParams, x: &DenseMatrix) -> Result<DenseMatrix> {
    if spec.classes() == 0 {
        return Err(Error::Contract("model has no classifier head".into()));
    }
    let out = encoder_output(spec, params, x)?;
    let n = spec.stochastic_dim();
    Ok(softmax_rows(&out.column_block(2 * n, 2 * n + spec.classes())))
}

/// Row-wise argmax; ties go to the lower index.
pub fn argmax_rows(probs: &DenseMatrix) -> Vec<usize> {
    probs
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

pub fn classify(spec: &ModelSpec, params: &ModelParams, x: &DenseMatrix) -> Result<Vec<usize>> {
    Ok(argmax_rows(&class_probabilities(spec, params, x)?))
}
