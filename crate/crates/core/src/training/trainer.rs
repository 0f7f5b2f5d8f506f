use std::fs::File;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::optimizer::{accumulate_grads, scale_grads, Sgd};
use super::sampling::{sample_patch, Patch, TrainingCase};
use super::{lr_schedule, ExperimentConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::inference::{decode_labels, predict_stack, ProbMap, SlidingWindow};
use crate::losses::{training_objective, LossBreakdown, LossWeights};
use crate::metrics::{dice, region_masks};
use crate::model::Network;
use crate::par::Exec;

pub const TRAIN_LOG_COLUMNS: [&str; 7] = ["epoch", "iteration", "lr", "loss_total", "loss_dice", "loss_ce", "loss_mp"];

/// Append-only CSV of per-iteration losses.
pub struct TrainLog {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl TrainLog {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut writer = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
        writer.write_record(TRAIN_LOG_COLUMNS).map_err(|e| Error::csv(&path, e))?;
        writer.flush().map_err(|e| Error::io(&path, e))?;
        Ok(TrainLog { path, writer })
    }

    pub fn append(&mut self, epoch: usize, iteration: usize, lr: f64, loss: &LossBreakdown) -> Result<()> {
        let row = [
            epoch.to_string(),
            iteration.to_string(),
            lr.to_string(),
            loss.total.to_string(),
            loss.dice.to_string(),
            loss.ce.to_string(),
            loss.mp.to_string(),
        ];
        self.writer.write_record(&row).map_err(|e| Error::csv(&self.path, e))?;
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Owns the network and optimizer state during training.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub network: Network<f32>,
    pub optimizer: Sgd,
    pub weights: LossWeights,
}

impl Trainer {
    pub fn new(network: Network<f32>, cfg: &TrainConfig) -> Self {
        let optimizer = Sgd::new(&network, cfg.momentum, cfg.weight_decay);
        Trainer {
            network,
            optimizer,
            weights: cfg.loss,
        }
    }

    /// Mean loss and mean parameter gradients over a batch.
    pub fn gradients(&self, batch: &[Patch]) -> Result<(LossBreakdown, Network<f32>)> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("training batch is empty"));
        }
        let arch = self.network.architecture();
        let mut total = LossBreakdown::default();
        let mut grads = self.network.zeros_like();
        for patch in batch {
            let (out, tape) = self.network.forward_train(&patch.branch_input(arch))?;
            let (loss, g_out) = training_objective(&out, &patch.labels, &self.weights)?;
            accumulate_grads(&mut grads, &self.network.backward(&tape, &g_out)?);
            total.add(&loss);
        }
        let f = 1.0 / batch.len() as f64;
        total.scale(f);
        scale_grads(&mut grads, f as f32);
        Ok((total, grads))
    }

    /// One SGD step; a non-finite loss leaves the parameters untouched and
    /// reports divergence.
    pub fn step(&mut self, batch: &[Patch], lr: f64, epoch: usize, iteration: usize) -> Result<LossBreakdown> {
        let (loss, grads) = self.gradients(batch)?;
        if !loss.total.is_finite() {
            return Err(Error::Diverged {
                epoch,
                iteration,
                loss: loss.total,
            });
        }
        self.optimizer.step(&mut self.network, &grads, lr)?;
        Ok(loss)
    }
}

/// Mean over cases of the mean hard Dice across ET, WT and TC.
pub fn validation_dice(
    network: &Network<f32>,
    cases: &[TrainingCase],
    window: &SlidingWindow,
    exec: Exec,
) -> Result<Option<f64>> {
    if cases.is_empty() {
        return Ok(None);
    }
    let mut sum = 0.0;
    for case in cases {
        let probs = predict_stack(network, &case.stack, window, exec)?;
        let pred = decode_labels(&ProbMap::new(probs, case.labels.spacing())?);
        let (p, r) = (region_masks(&pred), region_masks(&case.labels));
        let mut per_case = 0.0;
        for (pm, rm) in p.iter().zip(&r) {
            per_case += dice(pm, rm)?;
        }
        sum += per_case / 3.0;
    }
    Ok(Some(sum / cases.len() as f64))
}

/// Per-epoch record of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub val_dice: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the last epoch.
    pub network: Network<f32>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_dice: Option<f64>,
    pub best_checkpoint: PathBuf,
    pub last_checkpoint: PathBuf,
    pub log: PathBuf,
}

pub const BEST_CHECKPOINT: &str = "best.json";
pub const LAST_CHECKPOINT: &str = "last.json";
pub const TRAIN_LOG: &str = "train_log.csv";

/// Trains one fold, writing the log and checkpoints into `out_dir`.
///
/// `best.json` holds the parameters with the highest validation Dice (the
/// latest epoch when there are no validation cases) and `last.json` the final
/// parameters with optimizer state.
pub fn train_fold(
    train: &[TrainingCase],
    val: &[TrainingCase],
    cfg: &ExperimentConfig,
    out_dir: impl AsRef<Path>,
    exec: Exec,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyInput("no training cases"));
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let tc = &cfg.training;
    let fingerprint = cfg.fingerprint();
    let mut trainer = Trainer::new(Network::new(cfg.network.clone())?.with_exec(exec), tc);
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed ^ (tc.fold as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut log = TrainLog::create(out_dir.join(TRAIN_LOG))?;
    let best_path = out_dir.join(BEST_CHECKPOINT);
    let last_path = out_dir.join(LAST_CHECKPOINT);

    let mut history = Vec::with_capacity(tc.epoch_max);
    let mut best: Option<(usize, Option<f64>)> = None;
    let mut iteration = 0;
    for epoch in 0..tc.epoch_max {
        let lr = lr_schedule(epoch, tc)?;
        let mut loss_sum = 0.0;
        for _ in 0..tc.iterations_per_epoch {
            let batch: Vec<Patch> = (0..tc.batch_size)
                .map(|_| {
                    let case = &train[rng.random_range(0..train.len())];
                    sample_patch(case, tc.patch_size, tc.foreground_probability, &mut rng)
                })
                .collect();
            let loss = trainer.step(&batch, lr, epoch, iteration)?;
            log.append(epoch, iteration, lr, &loss)?;
            loss_sum += loss.total;
            iteration += 1;
        }
        let last_epoch = epoch + 1 == tc.epoch_max;
        let val_dice = if (epoch + 1) % tc.validate_every == 0 || last_epoch {
            validation_dice(&trainer.network, val, &cfg.inference, exec)?
        } else {
            None
        };
        let improved = match (val_dice, best) {
            (Some(d), Some((_, Some(b)))) => d > b,
            (Some(_), _) => true,
            (None, _) => val.is_empty() && last_epoch,
        };
        if improved {
            Checkpoint::capture(&trainer.network, None, tc.fold, epoch, iteration, &fingerprint, val_dice)
                .save(&best_path)?;
            best = Some((epoch, val_dice));
        }
        history.push(EpochRecord {
            epoch,
            lr,
            mean_loss: loss_sum / tc.iterations_per_epoch as f64,
            val_dice,
        });
    }
    let last_epoch = tc.epoch_max - 1;
    Checkpoint::capture(
        &trainer.network,
        Some(&trainer.optimizer),
        tc.fold,
        last_epoch,
        iteration,
        &fingerprint,
        history[last_epoch].val_dice,
    )
    .save(&last_path)?;
    let (best_epoch, best_val_dice) = best.expect("the last epoch always validates or saves");
    Ok(TrainOutcome {
        network: trainer.network,
        history,
        best_epoch,
        best_val_dice,
        best_checkpoint: best_path,
        last_checkpoint: last_path,
        log: log.path().to_path_buf(),
    })
}
