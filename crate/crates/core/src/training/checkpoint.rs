use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Sgd;
use crate::error::{Error, Result};
use crate::model::{Network, NetworkConfig};

pub const CHECKPOINT_FORMAT: &str = "mpseg-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// One named parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub values: Vec<f32>,
}

/// Serialized optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub momentum: f64,
    pub weight_decay: f64,
    pub velocity: Vec<NamedTensor>,
}

/// Self-describing snapshot of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub network: NetworkConfig,
    pub fold: usize,
    pub epoch: usize,
    pub iteration: usize,
    pub config_fingerprint: String,
    pub val_dice: Option<f64>,
    pub params: Vec<NamedTensor>,
    pub optimizer: Option<OptimizerState>,
}

fn named(net: &Network<f32>, values: impl Iterator<Item = Vec<f32>>) -> Vec<NamedTensor> {
    net.params()
        .into_iter()
        .zip(values)
        .map(|((name, _), values)| NamedTensor { name, values })
        .collect()
}

impl Checkpoint {
    pub fn capture(
        net: &Network<f32>,
        optimizer: Option<&Sgd>,
        fold: usize,
        epoch: usize,
        iteration: usize,
        config_fingerprint: impl Into<String>,
        val_dice: Option<f64>,
    ) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            network: net.config().clone(),
            fold,
            epoch,
            iteration,
            config_fingerprint: config_fingerprint.into(),
            val_dice,
            params: named(net, net.params().into_iter().map(|(_, p)| p.clone())),
            optimizer: optimizer.map(|o| OptimizerState {
                momentum: o.momentum,
                weight_decay: o.weight_decay,
                velocity: named(net, o.velocity.iter().cloned()),
            }),
        }
    }

    /// Rebuilds the network; every parameter must be present with the right length.
    pub fn network(&self) -> Result<Network<f32>> {
        let mut net = Network::<f32>::new(self.network.clone())?;
        let wide: Vec<(String, Vec<f64>)> = self
            .params
            .iter()
            .map(|t| (t.name.clone(), t.values.iter().map(|&v| f64::from(v)).collect()))
            .collect();
        net.load_params(wide.iter().map(|(n, v)| (n.as_str(), v.as_slice())))?;
        Ok(net)
    }

    /// Optimizer state aligned with the network's parameter order.
    pub fn optimizer(&self, net: &Network<f32>) -> Result<Option<Sgd>> {
        let Some(state) = &self.optimizer else {
            return Ok(None);
        };
        let mut velocity = Vec::new();
        for (name, p) in net.params() {
            let t = state
                .velocity
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::Checkpoint(format!("missing velocity for {name}")))?;
            if t.values.len() != p.len() {
                return Err(Error::Checkpoint(format!("velocity {name} has wrong length")));
            }
            velocity.push(t.values.clone());
        }
        Ok(Some(Sgd {
            momentum: state.momentum,
            weight_decay: state.weight_decay,
            velocity,
        }))
    }

    /// Writes JSON to a temporary sibling, then renames it into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let tmp = path.with_extension("json.tmp");
        let bytes = serde_json::to_vec(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("{}: not a checkpoint", path.display())));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported version {}",
                path.display(),
                ck.version
            )));
        }
        Ok(ck)
    }
}
