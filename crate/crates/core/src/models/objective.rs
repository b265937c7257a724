use super::latent::{analytic_kl, latent_backward, posterior_from_encoder, sample_latent, Noise};
use super::params::ModelParams;
use super::spec::ModelSpec;
use crate::error::{Error, Result};
use crate::nn::{
    bernoulli_log_likelihood, bernoulli_log_likelihood_grad, log_softmax_rows, mlp_backward,
    mlp_forward,
};
use crate::numerics::{DenseMatrix, RngState};

/// What a batch row contributes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowTarget {
    /// Unsupervised model: the ELBO.
    Plain,
    /// Semi-supervised model with a visible label.
    Labeled(usize),
    /// Semi-supervised model without a label: the label is enumerated.
    Unlabeled,
}

/// Per-example pieces of an objective evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveTerms {
    pub objective: Vec<f64>,
    /// Monte Carlo expected log-likelihood; for unlabeled rows the
    /// `q(y|x)`-weighted sum over classes.
    pub reconstruction: Vec<f64>,
    pub kl: Vec<f64>,
    /// `log q(y|x)` for labeled rows, the entropy of `q(·|x)` for unlabeled
    /// rows, zero otherwise.
    pub class_term: Vec<f64>,
    /// Per-class expected log-likelihood for unlabeled rows (empty for
    /// other rows).
    pub class_reconstruction: Vec<Vec<f64>>,
}

/// ELBO summary of a batch; the means are over the batch.
#[derive(Clone, Debug, PartialEq)]
pub struct ElboEstimate {
    pub expected_reconstruction: f64,
    pub kl: f64,
    pub elbo: f64,
    pub per_example_reconstruction: Vec<f64>,
    pub per_example_kl: Vec<f64>,
    pub per_example: Vec<f64>,
}

impl ElboEstimate {
    fn from_terms(t: ObjectiveTerms) -> Self {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        Self {
            expected_reconstruction: mean(&t.reconstruction),
            kl: mean(&t.kl),
            elbo: mean(&t.objective),
            per_example_reconstruction: t.reconstruction,
            per_example_kl: t.kl,
            per_example: t.objective,
        }
    }
}

fn check_targets(spec: &ModelSpec, x: &DenseMatrix, targets: &[RowTarget], noise: &Noise) -> Result<()> {
    if targets.len() != x.rows() || noise.rows() != x.rows() {
        return Err(Error::Dimension(format!(
            "{} rows of data, {} targets, {} noise rows",
            x.rows(),
            targets.len(),
            noise.rows()
        )));
    }
    if x.cols() != spec.input_dim() {
        return Err(Error::Dimension(format!(
            "data has {} columns, model expects {}",
            x.cols(),
            spec.input_dim()
        )));
    }
    let classes = spec.classes();
    for t in targets {
        match (*t, classes) {
            (RowTarget::Plain, 0) => {}
            (RowTarget::Plain, _) => {
                return Err(Error::Contract("semi-supervised models need labeled or unlabeled rows".into()))
            }
            (_, 0) => return Err(Error::Contract("unsupervised models only take plain rows".into())),
            (RowTarget::Labeled(y), c) if y >= c => {
                return Err(Error::Domain(format!("label {y} outside 0..{c}")))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Objective values only.
pub fn evaluate_objective(
    spec: &ModelSpec,
    params: &ModelParams,
    x: &DenseMatrix,
    targets: &[RowTarget],
    noise: &Noise,
) -> Result<ObjectiveTerms> {
    run(spec, params, x, targets, noise, None).map(|(t, _)| t)
}

/// Objective values and the gradient of `Σ_i weights[i] · objective[i]`
/// (an ascent direction; negate it to minimize).
pub fn objective_and_gradient(
    spec: &ModelSpec,
    params: &ModelParams,
    x: &DenseMatrix,
    targets: &[RowTarget],
    weights: &[f64],
    noise: &Noise,
) -> Result<(ObjectiveTerms, ModelParams)> {
    if weights.len() != x.rows() {
        return Err(Error::Dimension(format!("{} weights for {} rows", weights.len(), x.rows())));
    }
    run(spec, params, x, targets, noise, Some(weights)).map(|(t, g)| (t, g.expect("requested")))
}

fn run(
    spec: &ModelSpec,
    params: &ModelParams,
    x: &DenseMatrix,
    targets: &[RowTarget],
    noise: &Noise,
    weights: Option<&[f64]>,
) -> Result<(ObjectiveTerms, Option<ModelParams>)> {
    params.check_shapes(spec)?;
    check_targets(spec, x, targets, noise)?;
    let (enc_cfg, dec_cfg) = (spec.encoder_config(), spec.decoder_config());
    let rows = x.rows();
    let n = spec.stochastic_dim();
    let k_lat = spec.latent_dim();
    let classes = spec.classes();
    let samples = noise.num_samples();
    let inv_s = 1.0 / samples as f64;

    let (enc_trace, enc_out) = mlp_forward(&params.encoder, &enc_cfg, x)?;
    let state = posterior_from_encoder(spec, &enc_out)?;
    let log_q = (classes > 0).then(|| log_softmax_rows(&enc_out.column_block(2 * n, 2 * n + classes)));

    // stacked decoder rows: one per plain/labeled example, C per unlabeled
    let mut row_start = Vec::with_capacity(rows + 1);
    let mut stack_example = Vec::new();
    let mut stack_class = Vec::new();
    for (i, t) in targets.iter().enumerate() {
        row_start.push(stack_example.len());
        match *t {
            RowTarget::Plain => {
                stack_example.push(i);
                stack_class.push(None);
            }
            RowTarget::Labeled(y) => {
                stack_example.push(i);
                stack_class.push(Some(y));
            }
            RowTarget::Unlabeled => {
                for j in 0..classes {
                    stack_example.push(i);
                    stack_class.push(Some(j));
                }
            }
        }
    }
    row_start.push(stack_example.len());
    let stacked = stack_example.len();
    let x_stack = x.select_rows(&stack_example);
    // ∂J/∂(log-likelihood of a stacked row), before the 1/S factor
    let row_coef: Vec<f64> = (0..stacked)
        .map(|r| {
            let i = stack_example[r];
            let w = weights.map_or(0.0, |w| w[i]);
            match targets[i] {
                RowTarget::Unlabeled => {
                    w * log_q.as_ref().unwrap().get(i, stack_class[r].unwrap()).exp()
                }
                _ => w,
            }
        })
        .collect();

    let mut g1 = DenseMatrix::zeros(rows, n);
    let mut g2 = DenseMatrix::zeros(rows, n);
    let mut dec_grads: Option<Vec<_>> = weights.map(|_| params.decoder.iter().map(|l| l.zeros_like()).collect());
    let mut recon_rows = vec![0.0; stacked];
    let mut kl = vec![0.0; rows];

    let analytic = analytic_kl(spec, &state.posterior)?;
    let mut dec_in = DenseMatrix::zeros(stacked, k_lat + classes);
    for eps in noise.samples() {
        let ls = sample_latent(spec, &state.posterior, eps)?;
        if analytic.is_none() {
            for i in 0..rows {
                kl[i] += inv_s * ls.log_ratio[i];
            }
            if let (Some(w), Some((m1, m2))) = (weights, &ls.mc_kl_grad) {
                for i in 0..rows {
                    let c = w[i] * inv_s;
                    for k in 0..n {
                        g1.set(i, k, g1.get(i, k) - c * m1.get(i, k));
                        g2.set(i, k, g2.get(i, k) - c * m2.get(i, k));
                    }
                }
            }
        }
        for r in 0..stacked {
            let row = dec_in.row_mut(r);
            row[..k_lat].copy_from_slice(ls.latent.row(stack_example[r]));
            row[k_lat..].iter_mut().for_each(|v| *v = 0.0);
            if let Some(y) = stack_class[r] {
                row[k_lat + y] = 1.0;
            }
        }
        let (dec_trace, logits) = mlp_forward(&params.decoder, &dec_cfg, &dec_in)?;
        let ll = bernoulli_log_likelihood(&logits, &x_stack)?;
        for (acc, v) in recon_rows.iter_mut().zip(&ll) {
            *acc += inv_s * v;
        }
        if let Some(dec_acc) = dec_grads.as_mut() {
            let mut d_logits = bernoulli_log_likelihood_grad(&logits, &x_stack)?;
            for (r, &c) in row_coef.iter().enumerate() {
                d_logits.row_mut(r).iter_mut().for_each(|v| *v *= c * inv_s);
            }
            let (g, d_in) = mlp_backward(&params.decoder, &dec_cfg, &dec_trace, &d_logits, true)?;
            for (acc, l) in dec_acc.iter_mut().zip(&g) {
                acc.w.add_scaled(&l.w, 1.0)?;
                acc.bias.iter_mut().zip(&l.bias).for_each(|(a, b)| *a += b);
            }
            let d_in = d_in.expect("requested");
            let mut d_latent = DenseMatrix::zeros(rows, k_lat);
            for r in 0..stacked {
                let dst = d_latent.row_mut(stack_example[r]);
                for (d, s) in dst.iter_mut().zip(&d_in.row(r)[..k_lat]) {
                    *d += s;
                }
            }
            latent_backward(spec, &ls, &d_latent, &mut g1, &mut g2);
        }
    }
    if let Some((akl, a1, a2)) = &analytic {
        kl.copy_from_slice(akl);
        if let Some(w) = weights {
            for i in 0..rows {
                for k in 0..n {
                    g1.set(i, k, g1.get(i, k) - w[i] * a1.get(i, k));
                    g2.set(i, k, g2.get(i, k) - w[i] * a2.get(i, k));
                }
            }
        }
    }

    let mut terms = ObjectiveTerms {
        objective: vec![0.0; rows],
        reconstruction: vec![0.0; rows],
        kl,
        class_term: vec![0.0; rows],
        class_reconstruction: vec![Vec::new(); rows],
    };
    let mut d_class = DenseMatrix::zeros(rows, classes);
    for i in 0..rows {
        let rr = &recon_rows[row_start[i]..row_start[i + 1]];
        match targets[i] {
            RowTarget::Plain => terms.reconstruction[i] = rr[0],
            RowTarget::Labeled(y) => {
                let lq = log_q.as_ref().unwrap().row(i);
                terms.reconstruction[i] = rr[0];
                terms.class_term[i] = lq[y];
                if let Some(w) = weights {
                    let drow = d_class.row_mut(i);
                    for (j, d) in drow.iter_mut().enumerate() {
                        *d = w[i] * (f64::from(u8::from(j == y)) - lq[j].exp());
                    }
                }
            }
            RowTarget::Unlabeled => {
                let lq = log_q.as_ref().unwrap().row(i);
                let q: Vec<f64> = lq.iter().map(|v| v.exp()).collect();
                terms.reconstruction[i] = q.iter().zip(rr).map(|(a, b)| a * b).sum();
                terms.class_term[i] = -q.iter().zip(lq).map(|(a, b)| a * b).sum::<f64>();
                terms.class_reconstruction[i] = rr.to_vec();
                if let Some(w) = weights {
                    // ∂/∂logit_k of Σ_j q_j (R_j − log q_j) = q_k (g_k − Σ_j q_j g_j)
                    let g: Vec<f64> = rr.iter().zip(lq).map(|(r, l)| r - l).collect();
                    let mean: f64 = q.iter().zip(&g).map(|(a, b)| a * b).sum();
                    let drow = d_class.row_mut(i);
                    for j in 0..classes {
                        drow[j] = w[i] * q[j] * (g[j] - mean);
                    }
                }
            }
        }
        terms.objective[i] = terms.reconstruction[i] + terms.class_term[i] - terms.kl[i];
        if !terms.objective[i].is_finite() {
            return Err(Error::Numeric(format!("objective is not finite for batch row {i}")));
        }
    }

    let Some(dec_grads) = dec_grads else {
        return Ok((terms, None));
    };
    let mut d_enc = DenseMatrix::zeros(rows, 2 * n + classes);
    for i in 0..rows {
        let (a, b) = (g1.row(i), g2.row(i));
        let (da, db) = (state.d_first.row(i), state.d_second.row(i));
        let row = d_enc.row_mut(i);
        for k in 0..n {
            row[k] = a[k] * da[k];
            row[n + k] = b[k] * db[k];
        }
        row[2 * n..].copy_from_slice(d_class.row(i));
    }
    let (enc_grads, _) = mlp_backward(&params.encoder, &enc_cfg, &enc_trace, &d_enc, false)?;
    Ok((
        terms,
        Some(ModelParams {
            encoder: enc_grads,
            decoder: dec_grads,
        }),
    ))
}

fn targets_for(spec: &ModelSpec, rows: usize) -> Vec<RowTarget> {
    let t = if spec.classes() == 0 { RowTarget::Plain } else { RowTarget::Unlabeled };
    vec![t; rows]
}

/// Batch ELBO with `S = spec.mc_samples()` fresh samples. For a
/// semi-supervised model this is the label-marginalizing (unlabeled)
/// objective, which bounds `log p(x)`.
pub fn elbo(spec: &ModelSpec, params: &ModelParams, x: &DenseMatrix, rng: &mut RngState) -> Result<ElboEstimate> {
    let noise = Noise::draw(spec, x.rows(), rng);
    elbo_with_noise(spec, params, x, &noise)
}

pub fn elbo_with_noise(
    spec: &ModelSpec,
    params: &ModelParams,
    x: &DenseMatrix,
    noise: &Noise,
) -> Result<ElboEstimate> {
    let terms = evaluate_objective(spec, params, x, &targets_for(spec, x.rows()), noise)?;
    Ok(ElboEstimate::from_terms(terms))
}

/// Per-example labeled objective `E[log p(x|π, y)] − KL + log q(y|x)`.
pub fn semisup_labeled_objective(
    spec: &ModelSpec,
    params: &ModelParams,
    x: &DenseMatrix,
    labels: &[usize],
    rng: &mut RngState,
) -> Result<Vec<f64>> {
    let noise = Noise::draw(spec, x.rows(), rng);
    let targets: Vec<_> = labels.iter().map(|&y| RowTarget::Labeled(y)).collect();
    Ok(evaluate_objective(spec, params, x, &targets, &noise)?.objective)
}

/// Per-example unlabeled objective
/// `Σ_j q(j|x) E[log p(x|π, j)] + H[q(·|x)] − KL`, sharing the latent
/// samples across classes.
pub fn semisup_unlabeled_objective(
    spec: &ModelSpec,
    params: &ModelParams,
    x: &DenseMatrix,
    rng: &mut RngState,
) -> Result<Vec<f64>> {
    let noise = Noise::draw(spec, x.rows(), rng);
    let targets = vec![RowTarget::Unlabeled; x.rows()];
    Ok(evaluate_objective(spec, params, x, &targets, &noise)?.objective)
}
