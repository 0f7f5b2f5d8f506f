//! Synthetic multi-modal brain volumes with nested-ellipsoid tumors.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Dims3, Modality, MultiModalCase, SegVolume, Volume};

/// Tissue classes painted by the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tissue {
    Background,
    GrayMatter,
    WhiteMatter,
    Edema,
    Necrosis,
    Enhancing,
}

impl Tissue {
    pub fn label(self) -> u8 {
        match self {
            Tissue::Edema => 2,
            Tissue::Necrosis => 1,
            Tissue::Enhancing => 4,
            _ => 0,
        }
    }

    fn slot(self) -> usize {
        self as usize
    }

    /// Overlapping tumors keep the innermost class.
    fn rank(self) -> u8 {
        match self {
            Tissue::Edema => 1,
            Tissue::Enhancing => 2,
            Tissue::Necrosis => 3,
            _ => 0,
        }
    }
}

/// Mean intensity of each tissue, per modality.
///
/// Rows follow [`Modality::ALL`]; columns follow the [`Tissue`] declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastProfile {
    pub intensities: [[f32; 6]; 4],
}

impl Default for ContrastProfile {
    fn default() -> Self {
        ContrastProfile {
            intensities: [
                // bg, gray, white, edema, necrosis, enhancing
                [0.0, 0.55, 0.80, 0.50, 0.25, 0.45], // T1
                [0.0, 0.55, 0.80, 0.50, 0.30, 1.25], // T1ce
                [0.0, 0.60, 0.40, 1.00, 0.90, 0.80], // T2
                [0.0, 0.50, 0.40, 1.00, 0.70, 0.85], // Flair
            ],
        }
    }
}

impl ContrastProfile {
    pub fn intensity(&self, m: Modality, t: Tissue) -> f32 {
        self.intensities[m.index()][t.slot()]
    }
}

/// Parameters of one synthetic case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub seed: u64,
    pub dims: [usize; 3],
    pub tumor_count: usize,
    pub noise_sigma: f32,
    /// Edema semi-axis range as a fraction of the smallest volume dimension.
    pub tumor_radius: [f32; 2],
    /// Enhancing-shell and necrosis semi-axes relative to the edema semi-axes.
    pub enhancing_ratio: f32,
    pub necrosis_ratio: f32,
    #[serde(default)]
    pub contrast: ContrastProfile,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            seed: 0,
            dims: [40, 40, 40],
            tumor_count: 1,
            noise_sigma: 0.05,
            tumor_radius: [0.16, 0.24],
            enhancing_ratio: 0.65,
            necrosis_ratio: 0.4,
            contrast: ContrastProfile::default(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Ellipsoid {
    center: [f64; 3],
    radii: [f64; 3],
}

impl Ellipsoid {
    fn level(&self, p: [f64; 3]) -> f64 {
        (0..3).map(|i| ((p[i] - self.center[i]) / self.radii[i]).powi(2)).sum()
    }

    fn contains(&self, p: [f64; 3]) -> bool {
        self.level(p) <= 1.0
    }

    fn scaled(&self, f: f64) -> Ellipsoid {
        Ellipsoid {
            center: self.center,
            radii: self.radii.map(|r| r * f),
        }
    }
}

struct Layout {
    brain: Ellipsoid,
    white: Ellipsoid,
    tumors: Vec<Ellipsoid>,
}

fn validate(spec: &PhantomSpec) -> Result<Dims3> {
    if spec.dims.contains(&0) {
        return Err(Error::Config("phantom dims must be positive".into()));
    }
    if spec.tumor_count > 0 && spec.dims.iter().any(|&d| d < 16) {
        return Err(Error::Config(format!(
            "phantom dims {:?} must be at least 16 per axis to hold tumors",
            spec.dims
        )));
    }
    let [lo, hi] = spec.tumor_radius;
    if !(lo > 0.0 && lo <= hi) {
        return Err(Error::Config(format!("invalid tumor radius range {lo}..{hi}")));
    }
    let ok_ratio = |r: f32| r > 0.0 && r < 1.0;
    if !ok_ratio(spec.enhancing_ratio)
        || !ok_ratio(spec.necrosis_ratio)
        || spec.necrosis_ratio >= spec.enhancing_ratio
    {
        return Err(Error::Config(
            "shell ratios must satisfy 0 < necrosis < enhancing < 1".into(),
        ));
    }
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return Err(Error::Config(format!("noise sigma {} must be >= 0", spec.noise_sigma)));
    }
    Ok(Dims3::from_array(spec.dims))
}

fn layout(spec: &PhantomSpec, dims: Dims3, rng: &mut ChaCha8Rng) -> Result<Layout> {
    let d = dims.as_array().map(|n| n as f64);
    let center = d.map(|n| (n - 1.0) / 2.0);
    let brain = Ellipsoid {
        center,
        radii: d.map(|n| 0.42 * n),
    };
    let white = brain.scaled(0.6);
    let min_dim = d.iter().copied().fold(f64::INFINITY, f64::min);
    let [lo, hi] = spec.tumor_radius.map(f64::from);
    let mut tumors = Vec::with_capacity(spec.tumor_count);
    for t in 0..spec.tumor_count {
        let base = rng.random_range(lo..=hi) * min_dim;
        let radii: [f64; 3] = std::array::from_fn(|_| base * rng.random_range(0.85..=1.15));
        // the tumor sits in a ball of this radius in brain-normalized space
        let extent = (0..3).map(|i| radii[i] / brain.radii[i]).fold(0.0, f64::max);
        if extent > 0.9 {
            return Err(Error::TumorTooLarge(format!(
                "tumor {t} with semi-axes {radii:.1?} does not fit the brain ellipsoid"
            )));
        }
        let room = 1.0 - extent;
        let q = loop {
            let q: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
            if q.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                break q;
            }
        };
        let center = std::array::from_fn(|i| brain.center[i] + q[i] * room * brain.radii[i]);
        tumors.push(Ellipsoid { center, radii });
    }
    Ok(Layout {
        brain,
        white,
        tumors,
    })
}

fn tissue_at(layout: &Layout, p: [f64; 3], enh: f64, nec: f64) -> Tissue {
    if !layout.brain.contains(p) {
        return Tissue::Background;
    }
    let mut best = if layout.white.contains(p) {
        Tissue::WhiteMatter
    } else {
        Tissue::GrayMatter
    };
    for t in &layout.tumors {
        let level = t.level(p);
        let here = if level <= nec * nec {
            Tissue::Necrosis
        } else if level <= enh * enh {
            Tissue::Enhancing
        } else if level <= 1.0 {
            Tissue::Edema
        } else {
            continue;
        };
        if here.rank() > best.rank() {
            best = here;
        }
    }
    best
}

/// Generates one labeled case; identical specs give bit-identical cases.
pub fn generate_phantom(case_id: impl Into<String>, spec: &PhantomSpec) -> Result<MultiModalCase> {
    let dims = validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let layout = layout(spec, dims, &mut rng)?;
    let (enh, nec) = (spec.enhancing_ratio as f64, spec.necrosis_ratio as f64);

    let n = dims.len();
    let mut tissues = Vec::with_capacity(n);
    for i in 0..n {
        let [z, y, x] = dims.coords(i);
        tissues.push(tissue_at(&layout, [z as f64, y as f64, x as f64], enh, nec));
    }
    let labels: Vec<u8> = tissues.iter().map(|t| t.label()).collect();

    let noise = Normal::new(0.0f32, spec.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let spacing = [1.0; 3];
    let mut volumes = Vec::with_capacity(4);
    for m in Modality::ALL {
        let data: Vec<f32> = tissues
            .iter()
            .map(|&t| {
                let v = spec.contrast.intensity(m, t);
                if t == Tissue::Background || spec.noise_sigma == 0.0 {
                    v
                } else {
                    v + noise.sample(&mut rng)
                }
            })
            .collect();
        volumes.push(Volume::from_f32(dims, spacing, data)?);
    }
    let volumes: [Volume; 4] = volumes.try_into().expect("four modalities");
    MultiModalCase::new(case_id, volumes, Some(SegVolume::new(dims, spacing, labels)?))
}

/// Case id of the `index`-th generated case.
pub fn phantom_case_id(index: usize) -> String {
    format!("phantom_{index:03}")
}

/// Writes `n` cases into `out_dir`; case `i` uses seed `template.seed + i`.
pub fn generate_dataset(n: usize, template: &PhantomSpec, out_dir: impl AsRef<Path>) -> Result<Vec<String>> {
    if n == 0 {
        return Err(Error::Config("phantom dataset needs at least one case".into()));
    }
    let mut ids = Vec::with_capacity(n);
    for i in 0..n {
        let spec = PhantomSpec {
            seed: template.seed + i as u64,
            ..template.clone()
        };
        let id = phantom_case_id(i);
        generate_phantom(&id, &spec)?.save(out_dir.as_ref())?;
        ids.push(id);
    }
    Ok(ids)
}
