use super::TrainConfig;
use crate::error::{Error, Result};

/// Learning rate of `epoch`: linear warmup in steps of `lr_min`, then poly
/// decay from `lr_max` over the remaining epochs.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> Result<f64> {
    if epoch >= cfg.epoch_max {
        return Err(Error::EpochOutOfRange {
            epoch,
            max: cfg.epoch_max,
        });
    }
    if epoch < cfg.warmup_epochs {
        return Ok(cfg.lr_min * (epoch + 1) as f64);
    }
    let span = (cfg.epoch_max - cfg.warmup_epochs) as f64;
    let progress = (epoch - cfg.warmup_epochs) as f64 / span;
    Ok(cfg.lr_max * (1.0 - progress).powf(0.9))
}
