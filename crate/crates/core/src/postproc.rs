//! Connected-component cleanup of decoded label volumes.

use serde::{Deserialize, Serialize};

use crate::volume::{Dims3, SegVolume};

pub const MIN_COMPONENT_VOXELS: usize = 10;
pub const MIN_ENHANCING_VOXELS: usize = 500;

/// Voxel adjacency used for component labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    /// Face neighbors.
    #[serde(rename = "6")]
    Six,
    /// Face and edge neighbors.
    #[serde(rename = "18")]
    Eighteen,
    /// Face, edge and corner neighbors.
    #[default]
    #[serde(rename = "26")]
    TwentySix,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Option<Self> {
        match n {
            6 => Some(Connectivity::Six),
            18 => Some(Connectivity::Eighteen),
            26 => Some(Connectivity::TwentySix),
            _ => None,
        }
    }

    /// Neighbor offsets `[dz, dy, dx]`.
    pub fn offsets(self) -> Vec<[isize; 3]> {
        let max_nonzero = match self {
            Connectivity::Six => 1,
            Connectivity::Eighteen => 2,
            Connectivity::TwentySix => 3,
        };
        let mut out = Vec::new();
        for dz in -1..=1isize {
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let nz = [dz, dy, dx].iter().filter(|&&d| d != 0).count();
                    if nz > 0 && nz <= max_nonzero {
                        out.push([dz, dy, dx]);
                    }
                }
            }
        }
        out
    }
}

/// Component id per voxel (0 is background) and the size of each component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentLabeling {
    pub ids: Vec<u32>,
    /// `sizes[k - 1]` is the voxel count of component `k`.
    pub sizes: Vec<usize>,
}

impl ComponentLabeling {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi as usize] = lo;
        }
    }
}

/// Labels the connected components of `mask`.
///
/// Ids run 1..=K in raster order of each component's first voxel.
pub fn connected_components(mask: &[bool], dims: Dims3, connectivity: Connectivity) -> ComponentLabeling {
    assert_eq!(mask.len(), dims.len(), "mask length must match dims");
    // neighbors already visited by a raster scan
    let back: Vec<[isize; 3]> = connectivity
        .offsets()
        .into_iter()
        .filter(|o| (o[0], o[1], o[2]) < (0, 0, 0))
        .collect();
    let mut provisional = vec![0u32; mask.len()];
    let mut set = DisjointSet { parent: vec![0] };
    let [d, h, w] = dims.as_array().map(|v| v as isize);
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let i = dims.index(z as usize, y as usize, x as usize);
                if !mask[i] {
                    continue;
                }
                let mut label = 0;
                for o in &back {
                    let (nz, ny, nx) = (z + o[0], y + o[1], x + o[2]);
                    if nz < 0 || ny < 0 || nx < 0 || ny >= h || nx >= w {
                        continue;
                    }
                    let n = provisional[dims.index(nz as usize, ny as usize, nx as usize)];
                    if n == 0 {
                        continue;
                    }
                    if label == 0 {
                        label = n;
                    } else {
                        set.union(label, n);
                    }
                }
                if label == 0 {
                    label = set.parent.len() as u32;
                    set.parent.push(label);
                }
                provisional[i] = label;
            }
        }
    }
    let mut final_id = vec![0u32; set.parent.len()];
    let mut sizes = Vec::new();
    let mut ids = vec![0u32; mask.len()];
    for (i, &p) in provisional.iter().enumerate() {
        if p == 0 {
            continue;
        }
        let root = set.find(p) as usize;
        if final_id[root] == 0 {
            sizes.push(0);
            final_id[root] = sizes.len() as u32;
        }
        let id = final_id[root];
        ids[i] = id;
        sizes[id as usize - 1] += 1;
    }
    ComponentLabeling { ids, sizes }
}

/// Zeroes every whole-tumor component with fewer than `min_voxels` voxels.
pub fn remove_small_components(seg: &SegVolume, min_voxels: usize, connectivity: Connectivity) -> SegVolume {
    let mask: Vec<bool> = seg.labels().iter().map(|&l| l > 0).collect();
    let cc = connected_components(&mask, seg.dims(), connectivity);
    let mut out = seg.clone();
    for (l, &id) in out.labels_mut().iter_mut().zip(&cc.ids) {
        if id > 0 && cc.sizes[id as usize - 1] < min_voxels {
            *l = 0;
        }
    }
    out
}

/// Relabels all enhancing tumor as necrosis when the case holds fewer than
/// `threshold` enhancing voxels.
pub fn enforce_et_threshold(seg: &SegVolume, threshold: usize) -> SegVolume {
    let mut out = seg.clone();
    if seg.count(4) < threshold {
        out.labels_mut()
            .iter_mut()
            .filter(|l| **l == 4)
            .for_each(|l| *l = 1);
    }
    out
}

/// Thresholds of the two cleanup rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostprocessConfig {
    pub min_component_voxels: usize,
    pub min_enhancing_voxels: usize,
    pub connectivity: Connectivity,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        PostprocessConfig {
            min_component_voxels: MIN_COMPONENT_VOXELS,
            min_enhancing_voxels: MIN_ENHANCING_VOXELS,
            connectivity: Connectivity::TwentySix,
        }
    }
}

/// Small-component removal followed by the enhancing-tumor rule.
pub fn postprocess(seg: &SegVolume, cfg: &PostprocessConfig) -> SegVolume {
    let cleaned = remove_small_components(seg, cfg.min_component_voxels, cfg.connectivity);
    enforce_et_threshold(&cleaned, cfg.min_enhancing_voxels)
}
