//! Scalar 3D volumes, label volumes and multi-modal cases.

mod case;
pub mod nifti;
mod preprocess;

pub use case::{find_nifti, list_cases, load_case, Modality, MultiModalCase};
pub use nifti::{read_nifti, write_nifti};
pub use preprocess::{crop_to_brain, downsample_labels, normalize_modalities, CropBox};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid extent as (depth, height, width); width varies fastest in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims3 {
    pub depth: usize,
    pub height: usize,
    pub width: usize,
}

impl Dims3 {
    pub const fn new(depth: usize, height: usize, width: usize) -> Self {
        Dims3 {
            depth,
            height,
            width,
        }
    }

    pub const fn cube(n: usize) -> Self {
        Dims3::new(n, n, n)
    }

    pub const fn len(self) -> usize {
        self.depth * self.height * self.width
    }

    pub const fn is_empty(self) -> bool {
        self.len() == 0
    }

    pub const fn as_array(self) -> [usize; 3] {
        [self.depth, self.height, self.width]
    }

    pub const fn from_array(a: [usize; 3]) -> Self {
        Dims3::new(a[0], a[1], a[2])
    }

    #[inline]
    pub const fn index(self, z: usize, y: usize, x: usize) -> usize {
        (z * self.height + y) * self.width + x
    }

    #[inline]
    pub const fn coords(self, i: usize) -> [usize; 3] {
        let x = i % self.width;
        let y = (i / self.width) % self.height;
        let z = i / (self.width * self.height);
        [z, y, x]
    }

    /// Each axis divided by `f`, or `None` when some axis is not divisible.
    pub fn div_exact(self, f: usize) -> Option<Dims3> {
        if f == 0 || self.depth % f != 0 || self.height % f != 0 || self.width % f != 0 {
            return None;
        }
        Some(Dims3::new(self.depth / f, self.height / f, self.width / f))
    }
}

impl std::fmt::Display for Dims3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.depth, self.height, self.width)
    }
}

/// Voxel spacing in mm as (sz, sy, sx).
pub type Spacing = [f32; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DType {
    Float32,
    UInt8,
}

#[derive(Debug, Clone, PartialEq)]
pub enum VolumeData {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

impl VolumeData {
    pub fn len(&self) -> usize {
        match self {
            VolumeData::F32(v) => v.len(),
            VolumeData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            VolumeData::F32(_) => DType::Float32,
            VolumeData::U8(_) => DType::UInt8,
        }
    }
}

/// One scalar 3D grid with spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: Dims3,
    spacing: Spacing,
    data: VolumeData,
}

impl Volume {
    pub fn new(dims: Dims3, spacing: Spacing, data: VolumeData) -> Result<Self> {
        if dims.depth == 0 || dims.height == 0 || dims.width == 0 {
            return Err(Error::InvalidVolume(format!("zero-sized dims {dims}")));
        }
        if data.len() != dims.len() {
            return Err(Error::InvalidVolume(format!(
                "data length {} does not match dims {dims} ({} voxels)",
                data.len(),
                dims.len()
            )));
        }
        if !spacing.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::InvalidVolume(format!(
                "spacing {spacing:?} must be strictly positive"
            )));
        }
        Ok(Volume {
            dims,
            spacing,
            data,
        })
    }

    pub fn from_f32(dims: Dims3, spacing: Spacing, data: Vec<f32>) -> Result<Self> {
        Volume::new(dims, spacing, VolumeData::F32(data))
    }

    pub fn from_u8(dims: Dims3, spacing: Spacing, data: Vec<u8>) -> Result<Self> {
        Volume::new(dims, spacing, VolumeData::U8(data))
    }

    pub fn zeros_f32(dims: Dims3, spacing: Spacing) -> Result<Self> {
        Volume::from_f32(dims, spacing, vec![0.0; dims.len()])
    }

    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &VolumeData {
        &self.data
    }

    pub fn into_data(self) -> VolumeData {
        self.data
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            VolumeData::F32(v) => Some(v),
            VolumeData::U8(_) => None,
        }
    }

    pub fn as_f32_mut(&mut self) -> Option<&mut [f32]> {
        match &mut self.data {
            VolumeData::F32(v) => Some(v),
            VolumeData::U8(_) => None,
        }
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.data {
            VolumeData::U8(v) => Some(v),
            VolumeData::F32(_) => None,
        }
    }

    /// Converts to a float volume (identity for float data).
    pub fn to_f32(&self) -> Volume {
        let data = match &self.data {
            VolumeData::F32(v) => v.clone(),
            VolumeData::U8(v) => v.iter().map(|&b| f32::from(b)).collect(),
        };
        Volume {
            dims: self.dims,
            spacing: self.spacing,
            data: VolumeData::F32(data),
        }
    }

    /// Value at a flat index widened to f32.
    pub fn value(&self, i: usize) -> f32 {
        match &self.data {
            VolumeData::F32(v) => v[i],
            VolumeData::U8(v) => f32::from(v[i]),
        }
    }

    pub fn is_nonzero(&self, i: usize) -> bool {
        match &self.data {
            VolumeData::F32(v) => v[i] != 0.0,
            VolumeData::U8(v) => v[i] != 0,
        }
    }
}

/// Tumor label alphabet.
pub const LABELS: [u8; 4] = [0, 1, 2, 4];

/// Class index (0..4) for a label in {0, 1, 2, 4}.
#[inline]
pub fn label_to_class(label: u8) -> usize {
    match label {
        4 => 3,
        l => l as usize,
    }
}

#[inline]
pub fn class_to_label(class: usize) -> u8 {
    LABELS[class]
}

/// A uint8 volume whose values are all in {0, 1, 2, 4}.
#[derive(Debug, Clone, PartialEq)]
pub struct SegVolume(Volume);

impl SegVolume {
    pub fn new(dims: Dims3, spacing: Spacing, labels: Vec<u8>) -> Result<Self> {
        SegVolume::try_from(Volume::from_u8(dims, spacing, labels)?)
    }

    pub fn background(dims: Dims3, spacing: Spacing) -> Result<Self> {
        SegVolume::new(dims, spacing, vec![0; dims.len()])
    }

    pub fn dims(&self) -> Dims3 {
        self.0.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.0.spacing
    }

    pub fn labels(&self) -> &[u8] {
        match &self.0.data {
            VolumeData::U8(v) => v,
            VolumeData::F32(_) => unreachable!("SegVolume always holds uint8 data"),
        }
    }

    /// Mutates the label grid; the closure must keep values in the alphabet.
    pub(crate) fn labels_mut(&mut self) -> &mut [u8] {
        match &mut self.0.data {
            VolumeData::U8(v) => v,
            VolumeData::F32(_) => unreachable!("SegVolume always holds uint8 data"),
        }
    }

    pub fn volume(&self) -> &Volume {
        &self.0
    }

    pub fn into_volume(self) -> Volume {
        self.0
    }

    pub fn count(&self, label: u8) -> usize {
        self.labels().iter().filter(|&&l| l == label).count()
    }
}

impl TryFrom<Volume> for SegVolume {
    type Error = Error;

    fn try_from(v: Volume) -> Result<Self> {
        let v = match v.data {
            VolumeData::U8(_) => v,
            VolumeData::F32(ref data) => {
                let mut labels = Vec::with_capacity(data.len());
                for &x in data {
                    if x.fract() != 0.0 || !(0.0..=255.0).contains(&x) {
                        return Err(Error::InvalidVolume(format!(
                            "label volume holds non-integer value {x}"
                        )));
                    }
                    labels.push(x as u8);
                }
                Volume::from_u8(v.dims, v.spacing, labels)?
            }
        };
        if let Some(&bad) = v.as_u8().unwrap().iter().find(|l| !LABELS.contains(l)) {
            return Err(Error::LabelAlphabet(bad));
        }
        Ok(SegVolume(v))
    }
}
