//! Schedule, folds, patch sampling, optimizer, checkpoints and the epoch loop.

mod checkpoint;
mod config;
mod folds;
mod optimizer;
mod sampling;
mod schedule;
mod trainer;

pub use checkpoint::{Checkpoint, NamedTensor, OptimizerState, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{ExperimentConfig, TrainConfig};
pub use folds::{make_folds, Fold};
pub use optimizer::{accumulate_grads, scale_grads, Sgd};
pub use sampling::{extract_patch, sample_patch, Patch, TrainingCase};
pub use schedule::lr_schedule;
pub use trainer::{
    train_fold, validation_dice, EpochRecord, TrainLog, TrainOutcome, Trainer, BEST_CHECKPOINT, LAST_CHECKPOINT,
    TRAIN_LOG, TRAIN_LOG_COLUMNS,
};
