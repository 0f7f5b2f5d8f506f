use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// Two branches: A = (Flair, T2), B = (T1ce, T1).
    Pairing,
    /// One branch over all four modalities.
    Vanilla,
}

impl Architecture {
    pub fn branches(self) -> usize {
        match self {
            Architecture::Pairing => 2,
            Architecture::Vanilla => 1,
        }
    }

    pub fn branch_name(self, b: usize) -> &'static str {
        ["a", "b"][b]
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pairing" | "modality-pairing" => Ok(Architecture::Pairing),
            "vanilla" => Ok(Architecture::Vanilla),
            other => Err(Error::Config(format!("unknown architecture {other:?}"))),
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Architecture::Pairing => "pairing",
            Architecture::Vanilla => "vanilla",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub architecture: Architecture,
    /// Number of resolution levels, including the bottleneck.
    pub depth: usize,
    pub base_channels: usize,
    pub max_channels: usize,
    pub num_classes: usize,
    pub deep_supervision_levels: usize,
    pub seed: u64,
}

impl NetworkConfig {
    /// Five levels from 32 channels.
    pub fn full_scale(architecture: Architecture) -> Self {
        NetworkConfig {
            architecture,
            depth: 5,
            base_channels: 32,
            max_channels: 320,
            num_classes: 4,
            deep_supervision_levels: 3,
            seed: 0,
        }
    }

    /// Three levels from 8 channels.
    pub fn desk_scale(architecture: Architecture) -> Self {
        NetworkConfig {
            architecture,
            depth: 3,
            base_channels: 8,
            max_channels: 320,
            num_classes: 4,
            deep_supervision_levels: 1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::Config(format!("depth {} < 2", self.depth)));
        }
        if self.deep_supervision_levels > self.depth - 2 {
            return Err(Error::Config(format!(
                "deep_supervision_levels {} > depth - 2 = {}",
                self.deep_supervision_levels,
                self.depth - 2
            )));
        }
        if self.base_channels == 0 || self.max_channels < self.base_channels {
            return Err(Error::Config(format!(
                "channels: base {} max {}",
                self.base_channels, self.max_channels
            )));
        }
        if self.num_classes != 4 {
            return Err(Error::Config(format!(
                "num_classes must be 4 (background, NCR/NET, ED, ET), got {}",
                self.num_classes
            )));
        }
        Ok(())
    }

    /// Feature channels at level `l`: doubling per level, capped.
    pub fn channels(&self, level: usize) -> usize {
        (self.base_channels << level).min(self.max_channels)
    }

    /// Input channels of each branch.
    pub fn input_channels(&self) -> usize {
        4 / self.architecture.branches()
    }

    /// Spatial divisibility required of inputs.
    pub fn divisor(&self) -> usize {
        1 << (self.depth - 1)
    }
}
