use crate::error::Result;
use crate::models::{encode_posterior, posterior_mean_latents, ModelParams, ModelSpec, Posterior, Variant};
use crate::numerics::DenseMatrix;
use crate::stick::{effective_dimension, StickWeights};

/// What the per-dimension statistic in [`SparsityDiagnostics`] measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DimensionStatistic {
    /// Mean KL of each Gaussian coordinate to the standard normal.
    MeanKl,
    /// Mean stick weight `π_k` under the posterior-mean fractions.
    MeanActivation,
}

impl DimensionStatistic {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::MeanKl => "mean_kl",
            Self::MeanActivation => "mean_activation",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparsityDiagnostics {
    pub statistic: DimensionStatistic,
    pub per_dimension: Vec<f64>,
    /// L2 norm of each latent dimension's outgoing weights in the first
    /// decoder layer (raw, unscaled).
    pub weight_norms: Vec<f64>,
}

impl SparsityDiagnostics {
    pub fn to_csv(&self) -> String {
        let mut s = format!("dimension,{},weight_norm\n", self.statistic.as_str());
        for (k, (v, w)) in self.per_dimension.iter().zip(&self.weight_norms).enumerate() {
            s.push_str(&format!("{},{},{}\n", k + 1, v, w));
        }
        s
    }
}

/// Norms of the first `K` rows of the decoder's input layer. Rows hold a
/// unit's outgoing weights since layers are stored fan-in × fan-out.
pub fn decoder_weight_norms(spec: &ModelSpec, params: &ModelParams) -> Vec<f64> {
    let w = &params.decoder[0].w;
    (0..spec.latent_dim())
        .map(|k| w.row(k).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect()
}

fn column_means(m: &DenseMatrix) -> Vec<f64> {
    let n = m.rows().max(1) as f64;
    m.column_sums().into_iter().map(|s| s / n).collect()
}

pub fn sparsity_diagnostics(spec: &ModelSpec, params: &ModelParams, x: &DenseMatrix) -> Result<SparsityDiagnostics> {
    params.check_shapes(spec)?;
    let (statistic, per_dimension) = match spec.variant() {
        Variant::GaussVae => {
            let Posterior::Gaussian { mu, sigma } = encode_posterior(spec, params, x)? else {
                unreachable!("Gauss VAE posteriors are Gaussian")
            };
            let kl = DenseMatrix::from_fn(mu.rows(), mu.cols(), |i, j| {
                let (m, s) = (mu.get(i, j), sigma.get(i, j));
                0.5 * (m * m + s * s - 1.0) - s.ln()
            });
            (DimensionStatistic::MeanKl, column_means(&kl))
        }
        Variant::SbVae => (
            DimensionStatistic::MeanActivation,
            column_means(&posterior_mean_latents(spec, params, x)?),
        ),
    };
    Ok(SparsityDiagnostics {
        statistic,
        per_dimension,
        weight_norms: decoder_weight_norms(spec, params),
    })
}

/// Per-row effective dimension of the posterior-mean stick weights; `None`
/// for Gaussian latents, which have no stick ordering.
pub fn effective_dimensions(
    spec: &ModelSpec,
    params: &ModelParams,
    x: &DenseMatrix,
    mass: f64,
) -> Result<Option<Vec<usize>>> {
    if spec.variant() != Variant::SbVae {
        return Ok(None);
    }
    let z = posterior_mean_latents(spec, params, x)?;
    z.row_iter()
        .map(|r| Ok(effective_dimension(&StickWeights::new(r.to_vec())?, mass)))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}
