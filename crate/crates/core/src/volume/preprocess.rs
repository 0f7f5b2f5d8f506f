//! Crop-to-nonzero, per-modality z-scoring and label downsampling.

use serde::{Deserialize, Serialize};

use super::{Dims3, Modality, MultiModalCase, SegVolume, Volume, VolumeData};
use crate::error::{Error, Result};

/// Axis-aligned box inside a larger grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropBox {
    pub origin: [usize; 3],
    pub dims: Dims3,
    pub full: Dims3,
}

impl CropBox {
    pub fn identity(full: Dims3) -> Self {
        CropBox {
            origin: [0; 3],
            dims: full,
            full,
        }
    }

    pub fn crop<T: Copy>(&self, data: &[T]) -> Vec<T> {
        let mut out = Vec::with_capacity(self.dims.len());
        let [oz, oy, ox] = self.origin;
        for z in 0..self.dims.depth {
            for y in 0..self.dims.height {
                let start = self.full.index(z + oz, y + oy, ox);
                out.extend_from_slice(&data[start..start + self.dims.width]);
            }
        }
        out
    }

    /// Places cropped data back into the full grid, filling outside with `fill`.
    pub fn uncrop<T: Copy>(&self, data: &[T], fill: T) -> Vec<T> {
        let mut out = vec![fill; self.full.len()];
        let [oz, oy, ox] = self.origin;
        let w = self.dims.width;
        for z in 0..self.dims.depth {
            for y in 0..self.dims.height {
                let src = self.dims.index(z, y, 0);
                let dst = self.full.index(z + oz, y + oy, ox);
                out[dst..dst + w].copy_from_slice(&data[src..src + w]);
            }
        }
        out
    }

    pub fn crop_volume(&self, v: &Volume) -> Volume {
        let data = match v.data() {
            VolumeData::F32(d) => VolumeData::F32(self.crop(d)),
            VolumeData::U8(d) => VolumeData::U8(self.crop(d)),
        };
        Volume::new(self.dims, v.spacing(), data).expect("crop box lies inside the volume")
    }
}

/// Restricts the case to the tight bounding box of voxels where any modality is nonzero.
pub fn crop_to_brain(case: &MultiModalCase) -> Result<(MultiModalCase, CropBox)> {
    let dims = case.dims();
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any = false;
    for i in 0..dims.len() {
        if Modality::ALL.iter().any(|&m| case.channel(m)[i] != 0.0) {
            any = true;
            let c = dims.coords(i);
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
        }
    }
    if !any {
        return Err(Error::EmptyCase);
    }
    let bbox = CropBox {
        origin: lo,
        dims: Dims3::new(hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1),
        full: dims,
    };
    let mods = case.modalities().clone().map(|v| bbox.crop_volume(&v));
    let labels = case
        .labels()
        .map(|l| SegVolume::try_from(bbox.crop_volume(l.volume())))
        .transpose()?;
    Ok((
        MultiModalCase::new(case.case_id.clone(), mods, labels)?,
        bbox,
    ))
}

/// Z-scores each modality over its own nonzero voxels; zero elsewhere.
///
/// A modality whose masked voxels have zero variance maps to all zeros.
pub fn normalize_modalities(case: &MultiModalCase) -> MultiModalCase {
    let mods = Modality::ALL.map(|m| {
        let v = case.modality(m);
        let data = zscore_nonzero(case.channel(m));
        Volume::from_f32(v.dims(), v.spacing(), data).expect("same dims")
    });
    MultiModalCase::new(case.case_id.clone(), mods, case.labels().cloned())
        .expect("dims unchanged")
}

fn zscore_nonzero(x: &[f32]) -> Vec<f32> {
    let (n, sum) = x
        .iter()
        .filter(|&&v| v != 0.0)
        .fold((0usize, 0f64), |(n, s), &v| (n + 1, s + f64::from(v)));
    if n == 0 {
        return vec![0.0; x.len()];
    }
    let mean = sum / n as f64;
    let var = x
        .iter()
        .filter(|&&v| v != 0.0)
        .map(|&v| (f64::from(v) - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    let std = var.sqrt();
    if !(std > 0.0) || std / mean.abs().max(1.0) < 1e-12 {
        return vec![0.0; x.len()];
    }
    x.iter()
        .map(|&v| {
            if v == 0.0 {
                0.0
            } else {
                ((f64::from(v) - mean) / std) as f32
            }
        })
        .collect()
}

/// Nearest-neighbor downsampling taking the first voxel of each `factor`³ cell.
pub fn downsample_labels(seg: &SegVolume, factor: usize) -> Result<SegVolume> {
    if !factor.is_power_of_two() {
        return Err(Error::Config(format!(
            "downsampling factor {factor} is not a power of two"
        )));
    }
    let dims = seg.dims();
    let out = dims.div_exact(factor).ok_or_else(|| {
        Error::DimensionMismatch(format!("dims {dims} not divisible by {factor}"))
    })?;
    if factor == 1 {
        return Ok(seg.clone());
    }
    let src = seg.labels();
    let mut labels = Vec::with_capacity(out.len());
    for z in 0..out.depth {
        for y in 0..out.height {
            for x in 0..out.width {
                labels.push(src[dims.index(z * factor, y * factor, x * factor)]);
            }
        }
    }
    let s = seg.spacing();
    let f = factor as f32;
    SegVolume::new(out, [s[0] * f, s[1] * f, s[2] * f], labels)
}
