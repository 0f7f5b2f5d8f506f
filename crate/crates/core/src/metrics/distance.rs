use serde::{Deserialize, Serialize};

use super::RegionMask;
use crate::error::{Error, Result};
use crate::volume::{Dims3, Spacing};

/// HD95 value used when exactly one of the two masks is empty.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HdPenalty {
    /// Physical length of the volume diagonal.
    #[default]
    Diagonal,
    Fixed(f64),
}

impl HdPenalty {
    pub fn value(self, dims: Dims3, spacing: Spacing) -> f64 {
        match self {
            HdPenalty::Diagonal => dims
                .as_array()
                .iter()
                .zip(spacing)
                .map(|(&n, s)| (n as f64 * f64::from(s)).powi(2))
                .sum::<f64>()
                .sqrt(),
            HdPenalty::Fixed(v) => v,
        }
    }
}

/// Foreground voxels with at least one background face neighbor; outside the
/// grid counts as background.
pub fn surface(mask: &[bool], dims: Dims3) -> Vec<bool> {
    let [d, h, w] = dims.as_array();
    (0..mask.len())
        .map(|i| {
            if !mask[i] {
                return false;
            }
            let [z, y, x] = dims.coords(i);
            z == 0
                || y == 0
                || x == 0
                || z + 1 == d
                || y + 1 == h
                || x + 1 == w
                || !mask[dims.index(z - 1, y, x)]
                || !mask[dims.index(z + 1, y, x)]
                || !mask[dims.index(z, y - 1, x)]
                || !mask[dims.index(z, y + 1, x)]
                || !mask[dims.index(z, y, x - 1)]
                || !mask[dims.index(z, y, x + 1)]
        })
        .collect()
}

/// Lower envelope of parabolas along one line (Felzenszwalb and Huttenlocher).
fn edt_line(f: &[f64], step: f64, out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    v.clear();
    z.clear();
    let pos = |q: usize| q as f64 * step;
    for (q, &fq) in f.iter().enumerate() {
        if !fq.is_finite() {
            continue;
        }
        loop {
            let Some(&top) = v.last() else {
                v.push(q);
                z.push(f64::NEG_INFINITY);
                break;
            };
            let s = ((fq + pos(q) * pos(q)) - (f[top] + pos(top) * pos(top)))
                / (2.0 * (pos(q) - pos(top)));
            if s <= *z.last().unwrap() {
                v.pop();
                z.pop();
            } else {
                v.push(q);
                z.push(s);
                break;
            }
        }
    }
    if v.is_empty() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (p, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < pos(p) {
            k += 1;
        }
        let dq = pos(p) - pos(v[k]);
        *o = dq * dq + f[v[k]];
    }
}

/// Squared physical distance from every voxel to the nearest `true` voxel.
pub(crate) fn squared_edt(features: &[bool], dims: Dims3, spacing: Spacing) -> Vec<f64> {
    let [d, h, w] = dims.as_array();
    let mut g: Vec<f64> = features
        .iter()
        .map(|&f| if f { 0.0 } else { f64::INFINITY })
        .collect();
    let longest = d.max(h).max(w);
    let mut line = vec![0.0; longest];
    let mut out = vec![0.0; longest];
    let (mut v, mut z) = (Vec::with_capacity(longest), Vec::with_capacity(longest));
    let [sz, sy, sx] = spacing.map(f64::from);
    for zz in 0..d {
        for yy in 0..h {
            let start = dims.index(zz, yy, 0);
            line[..w].copy_from_slice(&g[start..start + w]);
            edt_line(&line[..w], sx, &mut out[..w], &mut v, &mut z);
            g[start..start + w].copy_from_slice(&out[..w]);
        }
    }
    for zz in 0..d {
        for xx in 0..w {
            for yy in 0..h {
                line[yy] = g[dims.index(zz, yy, xx)];
            }
            edt_line(&line[..h], sy, &mut out[..h], &mut v, &mut z);
            for yy in 0..h {
                g[dims.index(zz, yy, xx)] = out[yy];
            }
        }
    }
    for yy in 0..h {
        for xx in 0..w {
            for zz in 0..d {
                line[zz] = g[dims.index(zz, yy, xx)];
            }
            edt_line(&line[..d], sz, &mut out[..d], &mut v, &mut z);
            for zz in 0..d {
                g[dims.index(zz, yy, xx)] = out[zz];
            }
        }
    }
    g
}

/// 95th percentile (nearest rank) of the pooled closest distances between the
/// two mask surfaces.
///
/// Both empty gives 0; exactly one empty gives the penalty.
pub fn hd95(pred: &RegionMask, reference: &RegionMask, spacing: Spacing, penalty: HdPenalty) -> Result<f64> {
    if pred.dims != reference.dims {
        return Err(Error::DimensionMismatch(format!(
            "prediction {} vs reference {}",
            pred.dims, reference.dims
        )));
    }
    let dims = pred.dims;
    match (pred.is_empty(), reference.is_empty()) {
        (true, true) => return Ok(0.0),
        (true, false) | (false, true) => return Ok(penalty.value(dims, spacing)),
        _ => {}
    }
    let sp = surface(&pred.mask, dims);
    let sr = surface(&reference.mask, dims);
    let to_ref = squared_edt(&sr, dims, spacing);
    let to_pred = squared_edt(&sp, dims, spacing);
    let mut dist: Vec<f64> = sp
        .iter()
        .zip(&to_ref)
        .chain(sr.iter().zip(&to_pred))
        .filter(|(&on, _)| on)
        .map(|(_, &d2)| d2.sqrt())
        .collect();
    dist.sort_by(f64::total_cmp);
    let rank = (0.95 * dist.len() as f64).ceil() as usize;
    Ok(dist[rank.max(1) - 1])
}
