use super::adam::AdamState;
use super::config::TrainConfig;
use super::data::{DatasetSplit, Splits};
use super::metrics::MetricsHistory;
use crate::error::{Error, Result};
use crate::models::{
    classify, evaluate_objective, objective_and_gradient, ModelParams, ModelSpec, Noise, RowTarget,
};
use crate::numerics::{DenseMatrix, RngState};

const EVAL_CHUNK: usize = 500;

// Streams derived from the run RNG.
const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_EVAL: u64 = 1000;

/// Batch means of one split after an epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitMetrics {
    pub elbo: f64,
    /// Expected negative log-likelihood `−E_q[log p(x|z)]`.
    pub recon_error: f64,
    pub kl: f64,
    /// Semi-supervised models only.
    pub class_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub train: SplitMetrics,
    pub valid: SplitMetrics,
    pub test: SplitMetrics,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch (or the initial parameters
    /// when no epoch ran).
    pub params: ModelParams,
    pub history: MetricsHistory,
    pub best_epoch: Option<usize>,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

/// Patience-based early stopping on a score where higher is better.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            since_best: 0,
        }
    }

    /// Records a score; returns `(improved, stop)`.
    pub fn observe(&mut self, epoch: usize, score: f64) -> (bool, bool) {
        let improved = match self.best {
            None => true,
            Some((_, best)) => score > best,
        };
        if improved {
            self.best = Some((epoch, score));
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        (improved, self.since_best >= self.patience && !improved)
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|(e, _)| e)
    }
}

/// Validation score used for early stopping: validation ELBO, or negated
/// validation classification error for semi-supervised models.
pub fn default_validation_score(report: &EpochReport) -> f64 {
    match report.valid.class_error {
        Some(e) => -e,
        None => report.valid.elbo,
    }
}

/// Row targets and objective weights for a minibatch. Semi-supervised
/// batches weight labeled rows by `λ / N_l` and unlabeled rows by
/// `(1 − λ) / N_u`; an empty side contributes nothing (no renormalization).
pub fn batch_targets(spec: &ModelSpec, batch: &DatasetSplit) -> (Vec<RowTarget>, Vec<f64>) {
    let n = batch.len();
    let Some(semi) = spec.semisup() else {
        return (vec![RowTarget::Plain; n], vec![1.0 / n as f64; n]);
    };
    let lambda = semi.supervised_weight();
    let targets: Vec<RowTarget> = (0..n)
        .map(|i| match batch.visible_label(i) {
            Some(y) => RowTarget::Labeled(y),
            None => RowTarget::Unlabeled,
        })
        .collect();
    let labeled = targets.iter().filter(|t| matches!(t, RowTarget::Labeled(_))).count();
    let unlabeled = n - labeled;
    let weights = targets
        .iter()
        .map(|t| match t {
            RowTarget::Labeled(_) => lambda / labeled as f64,
            _ => (1.0 - lambda) / unlabeled as f64,
        })
        .collect();
    (targets, weights)
}

/// `λ · mean(labeled objective) + (1 − λ) · mean(unlabeled objective)` for
/// a minibatch split by its label mask, with one fresh noise draw.
pub fn semisup_batch_objective(
    lambda: f64,
    spec: &ModelSpec,
    params: &ModelParams,
    batch: &DatasetSplit,
    rng: &mut RngState,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("λ must lie in [0, 1], got {lambda}")));
    }
    if spec.semisup().is_none() {
        return Err(Error::Contract("semi-supervised objective on an unsupervised model".into()));
    }
    let (targets, _) = batch_targets(spec, batch);
    let labeled = targets.iter().filter(|t| matches!(t, RowTarget::Labeled(_))).count();
    let unlabeled = targets.len() - labeled;
    let noise = Noise::draw(spec, batch.len(), rng);
    let terms = evaluate_objective(spec, params, &batch.images, &targets, &noise)?;
    Ok(terms
        .objective
        .iter()
        .zip(&targets)
        .map(|(j, t)| match t {
            RowTarget::Labeled(_) => lambda * j / labeled as f64,
            _ => (1.0 - lambda) * j / unlabeled as f64,
        })
        .sum())
}

fn with_context(err: Error, epoch: usize, step: usize) -> Error {
    match err {
        Error::Numeric(m) => Error::Numeric(format!("epoch {epoch}, step {step}: {m}")),
        Error::Domain(m) => Error::Domain(format!("epoch {epoch}, step {step}: {m}")),
        other => other,
    }
}

/// Split metrics with a fixed noise stream, so successive epochs are
/// compared under common random numbers.
pub fn evaluate_split(
    spec: &ModelSpec,
    params: &ModelParams,
    split: &DatasetSplit,
    rng: &mut RngState,
) -> Result<SplitMetrics> {
    let n = split.len();
    if n == 0 {
        return Err(Error::Config("cannot evaluate an empty split".into()));
    }
    let target = if spec.classes() > 0 { RowTarget::Unlabeled } else { RowTarget::Plain };
    let (mut elbo, mut recon, mut kl, mut wrong) = (0.0, 0.0, 0.0, 0usize);
    let rows: Vec<usize> = (0..n).collect();
    for chunk in rows.chunks(EVAL_CHUNK) {
        let x = split.images.select_rows(chunk);
        let noise = Noise::draw(spec, chunk.len(), rng);
        let t = evaluate_objective(spec, params, &x, &vec![target; chunk.len()], &noise)?;
        elbo += t.objective.iter().sum::<f64>();
        recon += t.reconstruction.iter().sum::<f64>();
        kl += t.kl.iter().sum::<f64>();
        if spec.classes() > 0 {
            if let Some(labels) = &split.labels {
                let pred = classify(spec, params, &x)?;
                wrong += chunk.iter().zip(&pred).filter(|(&i, &p)| labels[i] != p).count();
            }
        }
    }
    let nf = n as f64;
    Ok(SplitMetrics {
        elbo: elbo / nf,
        recon_error: -recon / nf,
        kl: kl / nf,
        class_error: (spec.classes() > 0 && split.labels.is_some()).then(|| wrong as f64 / nf),
    })
}

fn record(history: &mut MetricsHistory, epoch: usize, split: &str, m: &SplitMetrics) {
    history.push(epoch, split, "elbo", m.elbo);
    history.push(epoch, split, "recon_error", m.recon_error);
    history.push(epoch, split, "kl", m.kl);
    if let Some(e) = m.class_error {
        history.push(epoch, split, "class_error", e);
    }
}

pub fn train(cfg: &TrainConfig, spec: &ModelSpec, data: &Splits, rng: &RngState) -> Result<TrainOutcome> {
    train_with_monitor(cfg, spec, data, rng, &mut |r: &EpochReport| default_validation_score(r))
}

/// Training loop with a caller-supplied validation score (higher is
/// better) driving early stopping.
pub fn train_with_monitor(
    cfg: &TrainConfig,
    spec: &ModelSpec,
    data: &Splits,
    rng: &RngState,
    monitor: &mut dyn FnMut(&EpochReport) -> f64,
) -> Result<TrainOutcome> {
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    for (name, split) in [("train", &data.train), ("valid", &data.valid), ("test", &data.test)] {
        if split.images.cols() != spec.input_dim() {
            return Err(Error::Dimension(format!(
                "{name} images have {} columns, model expects {}",
                split.images.cols(),
                spec.input_dim()
            )));
        }
    }
    let mut params = ModelParams::init(spec, &mut rng.derive(STREAM_INIT));
    let mut history = MetricsHistory::default();
    if cfg.epochs == 0 {
        return Ok(TrainOutcome {
            params,
            history,
            best_epoch: None,
            epochs_run: 0,
            stopped_early: false,
        });
    }
    if data.train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let lens: Vec<usize> = params.buffers().iter().map(|b| b.len()).collect();
    let mut adam = AdamState::new(cfg.adam, &lens);
    let mut shuffle_rng = rng.derive(STREAM_SHUFFLE);
    let mut noise_rng = rng.derive(STREAM_NOISE);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_params = params.clone();
    let mut epochs_run = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        let order = shuffle_rng.permutation(data.train.len());
        for (step, rows) in order.chunks(cfg.batch_size).enumerate() {
            let batch = data.train.select(rows);
            let (targets, weights) = batch_targets(spec, &batch);
            let noise = Noise::draw(spec, rows.len(), &mut noise_rng);
            let (_, mut grad) = objective_and_gradient(spec, &params, &batch.images, &targets, &weights, &noise)
                .map_err(|e| with_context(e, epoch, step + 1))?;
            // ascent on the objective = descent on its negation
            for buf in grad.buffers_mut() {
                buf.iter_mut().for_each(|g| *g = -*g);
            }
            adam.step(&mut params.buffers_mut(), &grad.buffers())
                .map_err(|e| with_context(e, epoch, step + 1))?;
        }
        epochs_run = epoch;

        let eval = |split: &DatasetSplit, stream: u64| {
            evaluate_split(spec, &params, split, &mut rng.derive(STREAM_EVAL + stream))
        };
        let report = EpochReport {
            epoch,
            train: eval(&data.train, 0)?,
            valid: eval(&data.valid, 1)?,
            test: eval(&data.test, 2)?,
        };
        record(&mut history, epoch, "train", &report.train);
        record(&mut history, epoch, "valid", &report.valid);
        record(&mut history, epoch, "test", &report.test);
        log::info!(
            "epoch {epoch}: train elbo {:.3}, valid elbo {:.3}, test recon {:.3}{}",
            report.train.elbo,
            report.valid.elbo,
            report.test.recon_error,
            report.valid.class_error.map(|e| format!(", valid error {:.4}", e)).unwrap_or_default()
        );

        let (improved, stop) = stopper.observe(epoch, monitor(&report));
        if improved {
            best_params = params.clone();
        }
        if stop {
            stopped_early = true;
            log::info!("early stop after epoch {epoch}; best epoch {:?}", stopper.best_epoch());
            break;
        }
    }
    Ok(TrainOutcome {
        params: best_params,
        history,
        best_epoch: stopper.best_epoch(),
        epochs_run,
        stopped_early,
    })
}

/// Convenience for callers holding a bare matrix.
pub fn unlabeled_split(images: DenseMatrix) -> DatasetSplit {
    DatasetSplit::new(images, None).expect("no labels to mismatch")
}
