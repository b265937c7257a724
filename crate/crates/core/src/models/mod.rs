//! Gauss VAE and SB-VAE models, their semi-supervised (M2) variants,
//! objectives, marginal-likelihood estimation and prior sampling.

mod eval;
mod gradcheck;
mod latent;
mod objective;
mod params;
mod spec;

pub use eval::{
    argmax_rows, class_probabilities, classify, decode_means, encode, encode_posterior, marginal_log_likelihood_is,
    posterior_mean_latents, sample_from_prior, sample_prior_latents, Encoding,
};
pub use gradcheck::{
    gradient_check, relative_error, toy_gradcheck_suite, GradCheckCase, GRADCHECK_FLOOR,
    GRADCHECK_STEP, GRADCHECK_TOLERANCE,
};
pub use latent::{Noise, Posterior};
pub use objective::{
    elbo, elbo_with_noise, evaluate_objective, objective_and_gradient, semisup_labeled_objective,
    semisup_unlabeled_objective, ElboEstimate, ObjectiveTerms, RowTarget,
};
pub use params::{load_model, save_model, ModelParams};
pub use spec::{
    FractionParam, LatentPrior, ModelSpec, SemiSupConfig, Variant, DEFAULT_SUPERVISED_WEIGHT,
};

/// Default number of importance samples for marginal-likelihood estimates.
pub const DEFAULT_IS_SAMPLES: usize = 100;
