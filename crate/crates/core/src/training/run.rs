use std::path::Path;

use super::config::RunConfig;
use super::data::{binarize, load_idx_images, load_idx_labels, make_splits, remove_labels, Splits};
use super::trainer::{train, TrainOutcome};
use crate::error::{Error, Result};
use crate::numerics::RngState;

const STREAM_SPLITS: u64 = 10;
const STREAM_LABELS: u64 = 11;

// A missing or unreadable file is reported against the config key naming it.
fn name_key(err: Error, key: &str, path: &Path) -> Error {
    match err {
        Error::Io(e) => Error::Config(format!("'{key}' = {}: {e}", path.display())),
        other => other,
    }
}

/// Loads the configured data and draws the seeded splits; semi-supervised
/// runs hide all but `keep_fraction` of the training labels.
pub fn prepare_data(cfg: &RunConfig) -> Result<Splits> {
    let mut images = load_idx_images(&cfg.images).map_err(|e| name_key(e, "images", &cfg.images))?;
    if cfg.binarize {
        images = binarize(&images);
    }
    let labels = cfg
        .labels
        .as_deref()
        .map(|p| load_idx_labels(p).map_err(|e| name_key(e, "labels", p)))
        .transpose()?;
    if let Some(l) = &labels {
        if l.len() != images.rows() {
            return Err(Error::Dimension(format!(
                "{} labels for {} images",
                l.len(),
                images.rows()
            )));
        }
        if let Some(&bad) = l.iter().find(|&&y| cfg.spec.classes() > 0 && y >= cfg.spec.classes()) {
            return Err(Error::Domain(format!("label {bad} outside 0..{}", cfg.spec.classes())));
        }
    }
    let root = RngState::new(cfg.train.seed);
    let mut splits = make_splits(&images, labels.as_deref(), cfg.split_sizes, &mut root.derive(STREAM_SPLITS))?;
    if cfg.spec.classes() > 0 {
        splits.train = remove_labels(&splits.train, cfg.keep_fraction, &mut root.derive(STREAM_LABELS))?;
    }
    Ok(splits)
}

/// `prepare_data` followed by `train` with the run seed.
pub fn run(cfg: &RunConfig) -> Result<(Splits, TrainOutcome)> {
    let splits = prepare_data(cfg)?;
    let outcome = train(&cfg.train, &cfg.spec, &splits, &RngState::new(cfg.train.seed))?;
    Ok((splits, outcome))
}
