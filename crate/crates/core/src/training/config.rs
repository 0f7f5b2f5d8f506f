use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::inference::SlidingWindow;
use crate::losses::LossWeights;
use crate::model::NetworkConfig;
use crate::postproc::PostprocessConfig;

/// Optimization and sampling settings of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub patch_size: [usize; 3],
    pub batch_size: usize,
    pub epoch_max: usize,
    pub warmup_epochs: usize,
    /// Starting rate and per-epoch warmup increment.
    pub lr_min: f64,
    pub lr_max: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub iterations_per_epoch: usize,
    /// Probability that a patch is centered on a tumor voxel.
    pub foreground_probability: f64,
    /// Run validation every this many epochs (and after the last one).
    pub validate_every: usize,
    pub seed: u64,
    pub fold: usize,
    pub num_folds: usize,
    pub loss: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            patch_size: [128; 3],
            batch_size: 2,
            epoch_max: 1000,
            warmup_epochs: 20,
            lr_min: 0.0005,
            lr_max: 0.01,
            momentum: 0.99,
            weight_decay: 3e-5,
            iterations_per_epoch: 250,
            foreground_probability: 2.0 / 3.0,
            validate_every: 1,
            seed: 0,
            fold: 0,
            num_folds: 5,
            loss: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    /// 32³ patches, 50 epochs of 6 iterations.
    pub fn desk_scale() -> Self {
        TrainConfig {
            patch_size: [32; 3],
            epoch_max: 50,
            iterations_per_epoch: 6,
            validate_every: 10,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.patch_size.contains(&0) || self.batch_size == 0 || self.iterations_per_epoch == 0 {
            return bad("patch size, batch size and iterations per epoch must be positive".into());
        }
        if self.warmup_epochs >= self.epoch_max {
            return bad(format!(
                "warmup_epochs {} must be below epoch_max {}",
                self.warmup_epochs, self.epoch_max
            ));
        }
        if !(self.lr_min > 0.0 && self.lr_max >= self.lr_min) {
            return bad(format!("learning rates min {} max {}", self.lr_min, self.lr_max));
        }
        let top = self.lr_min * self.warmup_epochs as f64;
        if self.warmup_epochs > 0 && (top - self.lr_max).abs() > 1e-9 * self.lr_max {
            return bad(format!(
                "warmup_epochs * lr_min = {top} must equal lr_max = {}",
                self.lr_max
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return bad(format!(
                "momentum {} must lie in [0, 1) and weight decay {} must be >= 0",
                self.momentum, self.weight_decay
            ));
        }
        if !(0.0..=1.0).contains(&self.foreground_probability) {
            return bad(format!(
                "foreground_probability {} outside [0, 1]",
                self.foreground_probability
            ));
        }
        if self.validate_every == 0 {
            return bad("validate_every must be positive".into());
        }
        if self.num_folds == 0 || self.fold >= self.num_folds {
            return bad(format!("fold {} outside 0..{}", self.fold, self.num_folds));
        }
        self.loss.validate()
    }
}

/// Everything a run needs, as stored in a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkConfig,
    pub training: TrainConfig,
    #[serde(default = "default_window")]
    pub inference: SlidingWindow,
    #[serde(default)]
    pub postprocess: PostprocessConfig,
}

fn default_window() -> SlidingWindow {
    SlidingWindow {
        patch_size: [128; 3],
        overlap: 0.5,
    }
}

impl ExperimentConfig {
    /// Defaults for every section with 128³ patches.
    pub fn full_scale(network: NetworkConfig) -> Self {
        ExperimentConfig {
            network,
            training: TrainConfig::default(),
            inference: default_window(),
            postprocess: PostprocessConfig::default(),
        }
    }

    pub fn desk_scale(network: NetworkConfig) -> Self {
        ExperimentConfig {
            network,
            training: TrainConfig::desk_scale(),
            inference: SlidingWindow {
                patch_size: [32; 3],
                overlap: 0.5,
            },
            postprocess: PostprocessConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.training.validate()?;
        self.inference.validate()?;
        let div = self.network.divisor();
        for (what, p) in [("training", self.training.patch_size), ("inference", self.inference.patch_size)] {
            if p.iter().any(|&s| s % div != 0) {
                return Err(Error::Config(format!(
                    "{what} patch {p:?} must be divisible by {div} for depth {}",
                    self.network.depth
                )));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical TOML rendering.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;

    #[test]
    fn defaults_are_consistent() {
        TrainConfig::default().validate().unwrap();
        TrainConfig::desk_scale().validate().unwrap();
        let d = TrainConfig::default();
        assert_eq!(d.warmup_epochs as f64 * d.lr_min, d.lr_max);
    }

    #[test]
    fn rejects_inconsistent_warmup() {
        let cfg = TrainConfig {
            warmup_epochs: 10,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn toml_round_trip_and_fingerprint() {
        let cfg = ExperimentConfig::desk_scale(NetworkConfig::desk_scale(Architecture::Pairing));
        let text = cfg.to_toml();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.fingerprint(), cfg.fingerprint());
        let mut other = cfg.clone();
        other.training.seed = 9;
        assert_ne!(other.fingerprint(), cfg.fingerprint());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_patch() {
        let cfg = ExperimentConfig::desk_scale(NetworkConfig::desk_scale(Architecture::Vanilla));
        let text = cfg.to_toml().replace("batch_size", "batch_sz");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::Config(_))));
        let mut bad = cfg;
        bad.training.patch_size = [30, 32, 32];
        assert!(bad.validate().is_err());
    }
}
