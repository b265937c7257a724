//! Finite-difference verification of full-model objective gradients on a
//! small toy problem with frozen noise.

use super::latent::Noise;
use super::objective::{evaluate_objective, objective_and_gradient, RowTarget};
use super::params::ModelParams;
use super::spec::{FractionParam, ModelSpec, SemiSupConfig};
use crate::error::Result;
use crate::numerics::{finite_difference_gradient, DenseMatrix, RngState};

pub const GRADCHECK_STEP: f64 = 1e-6;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Denominator floor of the relative error, so that gradients that are
/// zero up to rounding are compared absolutely.
pub const GRADCHECK_FLOOR: f64 = 1e-4;

const TOY_PIXELS: usize = 6;
const TOY_LATENT: usize = 3;
const TOY_CLASSES: usize = 2;
const TOY_ROWS: usize = 4;
const TOY_HIDDEN: usize = 5;
const TOY_INIT_VARIANCE: f64 = 0.3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckCase {
    pub name: String,
    pub params_checked: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADCHECK_FLOOR)
}

/// Largest relative error between the analytic gradient of
/// `Σ weights[i] · objective[i]` and central differences with step `h`.
pub fn gradient_check(
    spec: &ModelSpec,
    params: &ModelParams,
    x: &DenseMatrix,
    targets: &[RowTarget],
    weights: &[f64],
    noise: &Noise,
    h: f64,
) -> Result<f64> {
    let (_, grad) = objective_and_gradient(spec, params, x, targets, weights, noise)?;
    let mut probe = params.clone();
    let numeric = finite_difference_gradient(
        |theta| {
            probe.set_flat(theta)?;
            let t = evaluate_objective(spec, &probe, x, targets, noise)?;
            Ok(t.objective.iter().zip(weights).map(|(j, w)| j * w).sum())
        },
        &params.to_flat(),
        h,
    )?;
    Ok(grad
        .to_flat()
        .iter()
        .zip(&numeric)
        .map(|(&a, &b)| relative_error(a, b))
        .fold(0.0, f64::max))
}

fn toy_specs() -> Result<Vec<(String, ModelSpec)>> {
    let hidden = vec![TOY_HIDDEN];
    let mut base = vec![(
        "gauss_vae".to_string(),
        ModelSpec::gauss_vae(TOY_PIXELS, TOY_LATENT, hidden.clone())?,
    )];
    for f in [FractionParam::Kumaraswamy, FractionParam::Gamma, FractionParam::GaussLogit] {
        base.push((
            format!("sb_vae/{f}"),
            ModelSpec::sb_vae(TOY_PIXELS, TOY_LATENT, f, 5.0, hidden.clone())?,
        ));
    }
    Ok(base)
}

/// Runs every model variant and objective (plain ELBO for each latent
/// family, then M2 labeled and unlabeled objectives on each) on the toy
/// instance.
pub fn toy_gradcheck_suite(seed: u64) -> Result<Vec<GradCheckCase>> {
    let mut rng = RngState::new(seed);
    let x = DenseMatrix::from_fn(TOY_ROWS, TOY_PIXELS, |_, _| rng.uniform());
    let labels: Vec<usize> = (0..TOY_ROWS).map(|i| i % TOY_CLASSES).collect();
    let weights = vec![1.0 / TOY_ROWS as f64; TOY_ROWS];
    let semi = SemiSupConfig::new(TOY_CLASSES, 0.375)?;

    let mut cases = Vec::new();
    let mut run = |name: String, spec: &ModelSpec, targets: Vec<RowTarget>, rng: &mut RngState| -> Result<()> {
        let params = ModelParams::init_with_variance(spec, rng, TOY_INIT_VARIANCE);
        let noise = Noise::draw(spec, TOY_ROWS, rng);
        let err = gradient_check(spec, &params, &x, &targets, &weights, &noise, GRADCHECK_STEP)?;
        cases.push(GradCheckCase {
            name,
            params_checked: params.num_params(),
            max_rel_error: err,
            passed: err <= GRADCHECK_TOLERANCE,
        });
        Ok(())
    };
    for (name, spec) in toy_specs()? {
        let spec = spec.with_mc_samples(2)?;
        run(format!("{name}/elbo"), &spec, vec![RowTarget::Plain; TOY_ROWS], &mut rng)?;
        let m2 = spec.with_semisup(semi);
        let labeled = labels.iter().map(|&y| RowTarget::Labeled(y)).collect();
        run(format!("{name}/m2_labeled"), &m2, labeled, &mut rng)?;
        run(format!("{name}/m2_unlabeled"), &m2, vec![RowTarget::Unlabeled; TOY_ROWS], &mut rng)?;
    }
    Ok(cases)
}
