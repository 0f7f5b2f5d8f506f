//! Dual-branch modality-pairing U-Net and its single-branch baseline.
//!
//! Both architectures share one implementation: a U-Net with `B` parallel
//! branches where every encoder block consumes its own previous-level
//! features followed by the siblings', and every decoder block consumes
//! `[own upsampled, own skip, sibling skips...]`. With one branch this
//! collapses to a plain 3D U-Net.

mod block;
mod config;
mod network;

pub use block::{BlockCache, ConvBlock};
pub use config::{Architecture, NetworkConfig};
pub use network::{BranchInput, ForwardOutput, Network, OutputGrads, Tape};
