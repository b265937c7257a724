use super::mlp::{mlp_forward, LayerParams, MlpConfig};
use crate::error::{domain, Error, Result};
use crate::numerics::special::{logistic, softplus};
use crate::numerics::DenseMatrix;

fn check_targets(logits: &DenseMatrix, targets: &DenseMatrix) -> Result<()> {
    if logits.shape() != targets.shape() {
        return Err(Error::Dimension(format!(
            "logits {:?} vs targets {:?}",
            logits.shape(),
            targets.shape()
        )));
    }
    if let Some(x) = targets.as_slice().iter().find(|&&x| !(0.0..=1.0).contains(&x)) {
        return domain(format!("Bernoulli target {x} outside [0, 1]"));
    }
    Ok(())
}

/// Per-row Σ_d x_d log σ(ℓ_d) + (1 − x_d) log(1 − σ(ℓ_d)), evaluated as
/// `x·ℓ − softplus(ℓ)` so saturated logits stay finite.
pub fn bernoulli_log_likelihood(logits: &DenseMatrix, targets: &DenseMatrix) -> Result<Vec<f64>> {
    check_targets(logits, targets)?;
    Ok(logits
        .row_iter()
        .zip(targets.row_iter())
        .map(|(l, x)| l.iter().zip(x).map(|(&l, &x)| x * l - softplus(l)).sum())
        .collect())
}

/// Gradient of the log-likelihood with respect to the logits, `x − σ(ℓ)`
/// (the negated log-likelihood has gradient `σ(ℓ) − x`).
pub fn bernoulli_log_likelihood_grad(
    logits: &DenseMatrix,
    targets: &DenseMatrix,
) -> Result<DenseMatrix> {
    check_targets(logits, targets)?;
    let mut g = targets.clone();
    for (g, &l) in g.as_mut_slice().iter_mut().zip(logits.as_slice()) {
        *g -= logistic(l);
    }
    Ok(g)
}

pub fn log_softmax_rows(logits: &DenseMatrix) -> DenseMatrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    out
}

pub fn softmax_rows(logits: &DenseMatrix) -> DenseMatrix {
    log_softmax_rows(logits).map(f64::exp)
}

/// Class probabilities: softmax of the network's final linear layer.
pub fn categorical_head(
    params: &[LayerParams],
    cfg: &MlpConfig,
    x: &DenseMatrix,
) -> Result<DenseMatrix> {
    let (_, logits) = mlp_forward(params, cfg, x)?;
    Ok(softmax_rows(&logits))
}
