//! Adam, the training loop, run configuration and dataset ingestion.

mod adam;
mod config;
mod data;
mod metrics;
mod run;
mod trainer;


pub use adam::{AdamConfig, AdamState};
pub use config::{RunConfig, TrainConfig, DEFAULT_BATCH_SIZE, DEFAULT_PATIENCE};
pub use data::{
    binarize, load_idx, load_idx_images, load_idx_labels, make_splits, parse_idx, remove_labels, DatasetSplit,
    IdxData, Splits, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use metrics::{format_g9, MetricRecord, MetricsHistory, METRICS_HEADER};
pub use run::{prepare_data, run};
pub use trainer::{
    batch_targets, default_validation_score, evaluate_split, semisup_batch_objective, train, train_with_monitor,
    unlabeled_split, EarlyStopping, EpochReport, SplitMetrics, TrainOutcome,
};
