use rand::Rng;

use crate::error::{Error, Result};
use crate::inference::modality_stack;
use crate::model::{Architecture, BranchInput};
use crate::nn::Tensor;
use crate::volume::{crop_to_brain, normalize_modalities, Dims3, MultiModalCase, SegVolume};

/// A labeled case cropped to the brain and normalized, with its tumor voxels indexed.
#[derive(Debug, Clone)]
pub struct TrainingCase {
    pub case_id: String,
    pub stack: Tensor<f32>,
    pub labels: SegVolume,
    foreground: Vec<usize>,
}

impl TrainingCase {
    pub fn prepare(raw: &MultiModalCase) -> Result<Self> {
        if raw.labels().is_none() {
            return Err(Error::InvalidVolume(format!("case {} has no labels", raw.case_id)));
        }
        let (cropped, _) = crop_to_brain(raw)?;
        Ok(Self::from_preprocessed(&normalize_modalities(&cropped)))
    }

    /// Wraps a case that is already cropped and normalized.
    pub fn from_preprocessed(case: &MultiModalCase) -> Self {
        let labels = case.labels().cloned().expect("training cases carry labels");
        let foreground = labels
            .labels()
            .iter()
            .enumerate()
            .filter(|(_, &l)| l > 0)
            .map(|(i, _)| i)
            .collect();
        TrainingCase {
            case_id: case.case_id.clone(),
            stack: modality_stack(case),
            labels,
            foreground,
        }
    }

    pub fn dims(&self) -> Dims3 {
        self.stack.dims()
    }

    pub fn has_foreground(&self) -> bool {
        !self.foreground.is_empty()
    }
}

/// A modality patch with its aligned labels.
#[derive(Debug, Clone)]
pub struct Patch {
    pub origin: [isize; 3],
    pub stack: Tensor<f32>,
    pub labels: SegVolume,
}

impl Patch {
    pub fn branch_input(&self, arch: Architecture) -> BranchInput<f32> {
        BranchInput::from_modalities(arch, &self.stack).expect("four-channel stack")
    }

    pub fn has_foreground(&self) -> bool {
        self.labels.labels().iter().any(|&l| l > 0)
    }
}

/// Draws a patch; with probability `foreground_probability` (and when the case
/// has tumor) the patch is centered on a random tumor voxel, otherwise on a
/// uniform position. Regions outside the volume are zero.
pub fn sample_patch<R: Rng + ?Sized>(
    case: &TrainingCase,
    patch: [usize; 3],
    foreground_probability: f64,
    rng: &mut R,
) -> Patch {
    let dims = case.dims().as_array();
    let center: [usize; 3] = if case.has_foreground() && rng.random_bool(foreground_probability) {
        let v = case.foreground[rng.random_range(0..case.foreground.len())];
        case.dims().coords(v)
    } else {
        std::array::from_fn(|a| rng.random_range(0..dims[a]))
    };
    let origin: [isize; 3] = std::array::from_fn(|a| {
        let hi = dims[a].saturating_sub(patch[a]) as isize;
        (center[a] as isize - (patch[a] / 2) as isize).clamp(0, hi)
    });
    extract_patch(case, origin, patch)
}

/// Copies the box at `origin` with zero fill outside the case.
pub fn extract_patch(case: &TrainingCase, origin: [isize; 3], patch: [usize; 3]) -> Patch {
    let src = case.dims();
    let pd = Dims3::from_array(patch);
    let mut stack = Tensor::zeros(4, pd);
    let mut labels = vec![0u8; pd.len()];
    let inside = |a: usize, p: usize| -> Option<usize> {
        let s = origin[a] + p as isize;
        (s >= 0 && (s as usize) < src.as_array()[a]).then_some(s as usize)
    };
    for z in 0..pd.depth {
        let Some(sz) = inside(0, z) else { continue };
        for y in 0..pd.height {
            let Some(sy) = inside(1, y) else { continue };
            for x in 0..pd.width {
                let Some(sx) = inside(2, x) else { continue };
                let si = src.index(sz, sy, sx);
                let pi = pd.index(z, y, x);
                labels[pi] = case.labels.labels()[si];
                for c in 0..4 {
                    stack.channel_mut(c)[pi] = case.stack.channel(c)[si];
                }
            }
        }
    }
    Patch {
        origin,
        stack,
        labels: SegVolume::new(pd, case.labels.spacing(), labels).expect("copied labels are valid"),
    }
}
