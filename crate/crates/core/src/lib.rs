//! Volumetric brain-tumor segmentation with a dual-branch modality-pairing 3D U-Net.
//!
//! The crate covers the whole pipeline at desk scale:
//!
//! - [`volume`]: NIfTI-1 I/O, multi-modal case assembly and preprocessing
//! - [`phantom`]: deterministic synthetic multi-modal cases with known labels
//! - [`nn`] and [`model`]: a small CPU tensor/convolution stack and the
//!   dual-branch network (plus the single-branch baseline)
//! - [`losses`]: soft Dice, cross entropy, the Pearson consistency loss and
//!   deep supervision
//! - [`training`]: schedule, folds, patch sampling, SGD and the epoch loop
//! - [`inference`]: sliding-window prediction and ensemble averaging
//! - [`postproc`]: connected-component clean-up and the enhancing-tumor rule
//! - [`metrics`]: Dice, HD95, sensitivity, specificity and cohort summaries
//!
//! Data-parallel inner loops go through [`par::Exec`], which uses rayon when
//! the `parallel` feature is enabled and runs sequentially otherwise.

pub mod error;
pub mod inference;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod par;
pub mod phantom;
pub mod postproc;
pub mod training;
pub mod volume;

pub use error::{Error, Result};
