//! Whole-volume prediction by overlapping tiles, probability averaging across
//! models and label decoding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BranchInput, Network};
use crate::nn::{softmax_channels, Tensor};
use crate::par::Exec;
use crate::volume::{
    class_to_label, crop_to_brain, normalize_modalities, Dims3, Modality, MultiModalCase,
    SegVolume, Spacing,
};

/// Anything that maps a four-channel modality patch to four-class probabilities.
pub trait PatchModel: Sync {
    /// `stack` holds the modalities in [`Modality::ALL`] order.
    fn predict_patch(&self, stack: &Tensor<f32>) -> Result<Tensor<f32>>;
}

impl PatchModel for Network<f32> {
    fn predict_patch(&self, stack: &Tensor<f32>) -> Result<Tensor<f32>> {
        let input = BranchInput::from_modalities(self.architecture(), stack)?;
        Ok(softmax_channels(&self.forward(&input)?.logits))
    }
}

impl<F> PatchModel for F
where
    F: Fn(&Tensor<f32>) -> Result<Tensor<f32>> + Sync,
{
    fn predict_patch(&self, stack: &Tensor<f32>) -> Result<Tensor<f32>> {
        self(stack)
    }
}

/// Per-voxel class probabilities on a physical grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    probs: Tensor<f32>,
    spacing: Spacing,
}

impl ProbMap {
    /// Wraps a four-channel tensor whose channels sum to one at every voxel.
    pub fn new(probs: Tensor<f32>, spacing: Spacing) -> Result<Self> {
        if probs.channels() != 4 {
            return Err(Error::ShapeMismatch(format!(
                "probability map has {} channels, expected 4",
                probs.channels()
            )));
        }
        let n = probs.spatial();
        let d = probs.data();
        for v in 0..n {
            let s: f64 = (0..4).map(|c| f64::from(d[c * n + v])).sum();
            if (s - 1.0).abs() > 1e-4 || (0..4).any(|c| d[c * n + v] < 0.0) {
                return Err(Error::InvalidVolume(format!(
                    "voxel {v} probabilities sum to {s}"
                )));
            }
        }
        Ok(ProbMap { probs, spacing })
    }

    pub fn dims(&self) -> Dims3 {
        self.probs.dims()
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn probs(&self) -> &Tensor<f32> {
        &self.probs
    }

    pub fn class(&self, c: usize) -> &[f32] {
        self.probs.channel(c)
    }

    pub fn into_tensor(self) -> Tensor<f32> {
        self.probs
    }
}

/// Tiling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlidingWindow {
    pub patch_size: [usize; 3],
    /// Fraction of the patch shared by neighboring tiles, in `[0, 1)`.
    pub overlap: f64,
}

impl SlidingWindow {
    pub fn new(patch_size: [usize; 3], overlap: f64) -> Result<Self> {
        let w = SlidingWindow { patch_size, overlap };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size.contains(&0) {
            return Err(Error::Config("patch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::Config(format!("overlap {} outside [0, 1)", self.overlap)));
        }
        Ok(())
    }

    fn stride(&self, axis: usize) -> usize {
        ((self.patch_size[axis] as f64 * (1.0 - self.overlap)).floor() as usize).max(1)
    }

    /// Tile origins along one axis of length `size` (already padded to at least the patch).
    pub fn starts(&self, axis: usize, size: usize) -> Vec<usize> {
        let patch = self.patch_size[axis];
        if size <= patch {
            return vec![0];
        }
        let last = size - patch;
        let mut out: Vec<usize> = (0..last).step_by(self.stride(axis)).collect();
        out.push(last);
        out
    }

    /// All tile origins in raster order.
    pub fn tiles(&self, dims: Dims3) -> Vec<[usize; 3]> {
        let d = dims.as_array();
        let per_axis: Vec<Vec<usize>> = (0..3).map(|a| self.starts(a, d[a])).collect();
        let mut out = Vec::new();
        for &z in &per_axis[0] {
            for &y in &per_axis[1] {
                for &x in &per_axis[2] {
                    out.push([z, y, x]);
                }
            }
        }
        out
    }
}

fn extract(src: &Tensor<f32>, origin: [usize; 3], patch: Dims3) -> Tensor<f32> {
    let sd = src.dims();
    let mut out = Tensor::zeros(src.channels(), patch);
    let w = patch.width.min(sd.width.saturating_sub(origin[2]));
    for c in 0..src.channels() {
        let s = src.channel(c);
        let o = out.channel_mut(c);
        for z in 0..patch.depth {
            let sz = origin[0] + z;
            if sz >= sd.depth {
                break;
            }
            for y in 0..patch.height {
                let sy = origin[1] + y;
                if sy >= sd.height {
                    break;
                }
                let si = sd.index(sz, sy, origin[2]);
                let oi = patch.index(z, y, 0);
                o[oi..oi + w].copy_from_slice(&s[si..si + w]);
            }
        }
    }
    out
}

/// Averages per-tile probabilities over a preprocessed modality stack.
///
/// The stack is zero-padded up to the patch size where needed. Tiles are
/// evaluated `exec.width()` at a time and accumulated in raster order.
pub fn predict_stack<M: PatchModel + ?Sized>(
    model: &M,
    stack: &Tensor<f32>,
    window: &SlidingWindow,
    exec: Exec,
) -> Result<Tensor<f32>> {
    window.validate()?;
    if stack.channels() != 4 {
        return Err(Error::ShapeMismatch(format!(
            "modality stack has {} channels, expected 4",
            stack.channels()
        )));
    }
    let dims = stack.dims();
    let patch = Dims3::from_array(window.patch_size);
    let padded = Dims3::new(
        dims.depth.max(patch.depth),
        dims.height.max(patch.height),
        dims.width.max(patch.width),
    );
    let tiles = window.tiles(padded);
    let mut sum = Tensor::<f32>::zeros(4, padded);
    let mut visits = vec![0u32; padded.len()];
    for group in tiles.chunks(exec.width()) {
        let outs = exec.map(group.len(), |i| model.predict_patch(&extract(stack, group[i], patch)));
        for (origin, out) in group.iter().zip(outs) {
            let out = out?;
            if out.channels() != 4 || out.dims() != patch {
                return Err(Error::ShapeMismatch(format!(
                    "patch model returned {}x{}, expected 4x{patch}",
                    out.channels(),
                    out.dims()
                )));
            }
            for c in 0..4 {
                let src = out.channel(c);
                let dst = sum.channel_mut(c);
                for z in 0..patch.depth {
                    for y in 0..patch.height {
                        let di = padded.index(origin[0] + z, origin[1] + y, origin[2]);
                        let si = patch.index(z, y, 0);
                        dst[di..di + patch.width]
                            .iter_mut()
                            .zip(&src[si..si + patch.width])
                            .for_each(|(a, b)| *a += b);
                    }
                }
            }
            for z in 0..patch.depth {
                for y in 0..patch.height {
                    let di = padded.index(origin[0] + z, origin[1] + y, origin[2]);
                    visits[di..di + patch.width].iter_mut().for_each(|v| *v += 1);
                }
            }
        }
    }
    let mut out = Tensor::zeros(4, dims);
    for c in 0..4 {
        let s = sum.channel(c);
        let o = out.channel_mut(c);
        for (i, v) in o.iter_mut().enumerate() {
            let [z, y, x] = dims.coords(i);
            let pi = padded.index(z, y, x);
            *v = s[pi] / visits[pi] as f32;
        }
    }
    Ok(out)
}

/// Stacks the modalities of a case into one four-channel tensor.
pub fn modality_stack(case: &MultiModalCase) -> Tensor<f32> {
    let mut data = Vec::with_capacity(4 * case.dims().len());
    for m in Modality::ALL {
        data.extend_from_slice(case.channel(m));
    }
    Tensor::from_vec(4, case.dims(), data).expect("sized")
}

/// Predicts a raw case: crop to the brain box, normalize, tile, and place the
/// result back on the original grid with background certainty outside the box.
pub fn sliding_window_predict<M: PatchModel + ?Sized>(
    model: &M,
    case: &MultiModalCase,
    window: &SlidingWindow,
    exec: Exec,
) -> Result<ProbMap> {
    let (cropped, bbox) = crop_to_brain(case)?;
    let stack = modality_stack(&normalize_modalities(&cropped));
    let inner = predict_stack(model, &stack, window, exec)?;
    let mut data = Vec::with_capacity(4 * bbox.full.len());
    for c in 0..4 {
        let fill = if c == 0 { 1.0 } else { 0.0 };
        data.extend(bbox.uncrop(inner.channel(c), fill));
    }
    ProbMap::new(Tensor::from_vec(4, bbox.full, data)?, case.spacing())
}

/// Voxel-wise arithmetic mean of the member maps.
pub fn ensemble_average(maps: &[ProbMap]) -> Result<ProbMap> {
    let first = maps.first().ok_or(Error::EmptyInput("ensemble needs at least one map"))?;
    if let Some(bad) = maps.iter().find(|m| m.dims() != first.dims()) {
        return Err(Error::DimensionMismatch(format!(
            "ensemble maps {} vs {}",
            first.dims(),
            bad.dims()
        )));
    }
    let m = maps.len() as f64;
    let n = first.probs.len();
    let data = (0..n)
        .map(|i| (maps.iter().map(|p| f64::from(p.probs.data()[i])).sum::<f64>() / m) as f32)
        .collect();
    Ok(ProbMap {
        probs: Tensor::from_vec(4, first.dims(), data)?,
        spacing: first.spacing,
    })
}

/// Per-voxel argmax mapped to labels {0, 1, 2, 4}; ties go to the lower class.
pub fn decode_labels(p: &ProbMap) -> SegVolume {
    let n = p.dims().len();
    let d = p.probs.data();
    let labels = (0..n)
        .map(|v| {
            let mut best = 0;
            for c in 1..4 {
                if d[c * n + v] > d[best * n + v] {
                    best = c;
                }
            }
            class_to_label(best)
        })
        .collect();
    SegVolume::new(p.dims(), p.spacing, labels).expect("decoded labels are valid")
}

/// A named trained network.
#[derive(Debug, Clone)]
pub struct Member {
    pub name: String,
    pub network: Network<f32>,
}

/// Averages the sliding-window predictions of several networks.
#[derive(Debug, Clone)]
pub struct Ensemble {
    members: Vec<Member>,
}

impl Ensemble {
    /// Accepts any mix of architectures as long as every member predicts the
    /// four-class label space.
    pub fn new(members: Vec<Member>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyInput("ensemble needs at least one member"));
        }
        if let Some(m) = members.iter().find(|m| m.network.config().num_classes != 4) {
            return Err(Error::IncompatibleLabelSpace {
                member: m.name.clone(),
                classes: m.network.config().num_classes,
            });
        }
        Ok(Ensemble { members })
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn predict(&self, case: &MultiModalCase, window: &SlidingWindow, exec: Exec) -> Result<ProbMap> {
        let maps = self
            .members
            .iter()
            .map(|m| sliding_window_predict(&m.network, case, window, exec))
            .collect::<Result<Vec<_>>>()?;
        ensemble_average(&maps)
    }
}

/// Names of the `k` candidates with the highest validation score, best first.
///
/// Equal scores keep their input order.
pub fn select_top_members(candidates: &[(String, f64)], k: usize) -> Vec<String> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| candidates[b].1.total_cmp(&candidates[a].1));
    order.into_iter().take(k).map(|i| candidates[i].0.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Volume;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn map_from(dims: Dims3, per_voxel: impl Fn(usize) -> [f32; 4]) -> ProbMap {
        let n = dims.len();
        let mut data = vec![0.0; 4 * n];
        for v in 0..n {
            let p = per_voxel(v);
            for c in 0..4 {
                data[c * n + v] = p[c];
            }
        }
        ProbMap::new(Tensor::from_vec(4, dims, data).unwrap(), [1.0; 3]).unwrap()
    }

    fn random_map(dims: Dims3, rng: &mut ChaCha8Rng) -> ProbMap {
        let data = (0..4 * dims.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
        ProbMap::new(softmax_channels(&Tensor::from_vec(4, dims, data).unwrap()), [1.0; 3]).unwrap()
    }

    fn constant_model(p: [f32; 4]) -> impl Fn(&Tensor<f32>) -> Result<Tensor<f32>> + Sync {
        move |x: &Tensor<f32>| {
            let n = x.spatial();
            let data = (0..4).flat_map(|c| std::iter::repeat_n(p[c], n)).collect();
            Tensor::from_vec(4, x.dims(), data)
        }
    }

    fn random_stack(dims: Dims3, seed: u64) -> Tensor<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..4 * dims.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_vec(4, dims, data).unwrap()
    }

    #[test]
    fn tile_starts_cover_the_axis() {
        let w = SlidingWindow::new([8, 8, 8], 0.5).unwrap();
        assert_eq!(w.starts(0, 8), vec![0]);
        assert_eq!(w.starts(0, 5), vec![0]);
        assert_eq!(w.starts(0, 12), vec![0, 4]);
        assert_eq!(w.starts(0, 13), vec![0, 4, 5]);
        assert_eq!(w.starts(0, 16), vec![0, 4, 8]);
        assert!(SlidingWindow::new([8, 8, 8], 1.0).is_err());
    }

    #[test]
    fn single_tile_equals_forward() {
        let net = Network::<f32>::new(crate::model::NetworkConfig {
            depth: 2,
            base_channels: 2,
            max_channels: 4,
            deep_supervision_levels: 0,
            ..crate::model::NetworkConfig::desk_scale(crate::model::Architecture::Pairing)
        })
        .unwrap();
        let stack = random_stack(Dims3::cube(8), 1);
        let w = SlidingWindow::new([8, 8, 8], 0.5).unwrap();
        for exec in Exec::available() {
            let tiled = predict_stack(&net, &stack, &w, exec).unwrap();
            assert_eq!(tiled, net.predict_patch(&stack).unwrap());
        }
    }

    #[test]
    fn constant_model_gives_constant_map() {
        let p = [0.1, 0.2, 0.3, 0.4];
        let model = constant_model(p);
        let stack = random_stack(Dims3::new(13, 9, 20), 2);
        let w = SlidingWindow::new([8, 8, 8], 0.5).unwrap();
        let out = predict_stack(&model, &stack, &w, Exec::default()).unwrap();
        for c in 0..4 {
            assert!(out.channel(c).iter().all(|&v| (v - p[c]).abs() < 1e-6));
        }
    }

    #[test]
    fn overlap_region_is_mean_of_tiles() {
        // tile at x=0 predicts class 1, tile at x=4 predicts class 2
        let model = |x: &Tensor<f32>| -> Result<Tensor<f32>> {
            let first = x.channel(0)[0];
            let class = if first == 0.0 { 1 } else { 2 };
            let mut out = Tensor::zeros(4, x.dims());
            out.channel_mut(class).iter_mut().for_each(|v| *v = 1.0);
            Ok(out)
        };
        let dims = Dims3::new(2, 2, 12);
        let mut data = vec![0.0; 4 * dims.len()];
        for y in 0..2 {
            for z in 0..2 {
                data[dims.index(z, y, 4)] = 1.0;
            }
        }
        let stack = Tensor::from_vec(4, dims, data).unwrap();
        let w = SlidingWindow::new([2, 2, 8], 0.5).unwrap();
        let out = predict_stack(&model, &stack, &w, Exec::default()).unwrap();
        for x in 0..12 {
            let (p1, p2) = (out.channel(1)[x], out.channel(2)[x]);
            match x {
                0..=3 => assert_eq!((p1, p2), (1.0, 0.0)),
                4..=7 => assert_eq!((p1, p2), (0.5, 0.5)),
                _ => assert_eq!((p1, p2), (0.0, 1.0)),
            }
        }
    }

    #[test]
    fn small_volume_is_padded() {
        let model = constant_model([0.25; 4]);
        let stack = random_stack(Dims3::new(3, 5, 6), 3);
        let w = SlidingWindow::new([8, 8, 8], 0.5).unwrap();
        let out = predict_stack(&model, &stack, &w, Exec::default()).unwrap();
        assert_eq!(out.dims(), Dims3::new(3, 5, 6));
    }

    #[test]
    fn raw_case_prediction_uncrops_with_background() {
        let dims = Dims3::cube(10);
        let mods = Modality::ALL.map(|_| {
            let data = (0..dims.len())
                .map(|i| {
                    let [z, y, x] = dims.coords(i);
                    if (2..8).contains(&z) && (3..7).contains(&y) && (1..9).contains(&x) {
                        1.0 + (i % 7) as f32
                    } else {
                        0.0
                    }
                })
                .collect();
            Volume::from_f32(dims, [1.0; 3], data).unwrap()
        });
        let case = MultiModalCase::new("c", mods, None).unwrap();
        let model = constant_model([0.0, 0.0, 0.0, 1.0]);
        let w = SlidingWindow::new([4, 4, 4], 0.5).unwrap();
        let p = sliding_window_predict(&model, &case, &w, Exec::default()).unwrap();
        let seg = decode_labels(&p);
        assert_eq!(seg.count(4), 6 * 4 * 8);
        assert_eq!(seg.labels()[0], 0);
    }

    #[test]
    fn ensemble_fixtures() {
        let d = Dims3::new(1, 1, 1);
        let a = map_from(d, |_| [1.0, 0.0, 0.0, 0.0]);
        let b = map_from(d, |_| [0.0, 1.0, 0.0, 0.0]);
        assert_eq!(ensemble_average(std::slice::from_ref(&a)).unwrap(), a);
        let m = ensemble_average(&[a.clone(), b]).unwrap();
        assert_eq!(m.probs().data(), &[0.5, 0.5, 0.0, 0.0]);
        let three: Vec<ProbMap> = [0.2f32, 0.5, 0.8]
            .iter()
            .map(|&p| map_from(d, |_| [1.0 - p, p, 0.0, 0.0]))
            .collect();
        assert!((ensemble_average(&three).unwrap().class(1)[0] - 0.5).abs() < 1e-7);
        assert!(matches!(ensemble_average(&[]), Err(Error::EmptyInput(_))));
        let other = map_from(Dims3::new(1, 1, 2), |_| [1.0, 0.0, 0.0, 0.0]);
        assert!(ensemble_average(&[a, other]).is_err());
    }

    #[test]
    fn decode_fixtures() {
        let d = Dims3::new(1, 1, 4);
        let onehot = map_from(d, |v| {
            let mut p = [0.0; 4];
            p[v] = 1.0;
            p
        });
        assert_eq!(decode_labels(&onehot).labels(), &[0, 1, 2, 4]);
        let uniform = map_from(d, |_| [0.25; 4]);
        assert!(decode_labels(&uniform).labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn perfect_and_anti_perfect_ensemble() {
        let d = Dims3::cube(2);
        let truth = [0usize, 1, 2, 3, 3, 2, 1, 0];
        let perfect = map_from(d, |v| {
            let mut p = [0.0; 4];
            p[truth[v]] = 1.0;
            p
        });
        // puts 0.7 on the "next" class and 0.3 on the class after that
        let anti = map_from(d, |v| {
            let mut p = [0.0; 4];
            p[(truth[v] + 1) % 4] = 0.7;
            p[(truth[v] + 2) % 4] = 0.3;
            p
        });
        let mean = ensemble_average(&[perfect, anti]).unwrap();
        let decoded = decode_labels(&mean);
        // mean puts 0.5 on the truth and 0.35 on the next class
        let expected: Vec<u8> = truth.iter().map(|&c| class_to_label(c)).collect();
        assert_eq!(decoded.labels(), expected.as_slice());
    }

    #[test]
    fn member_selection_and_label_space() {
        let c = vec![("a".to_string(), 0.7), ("b".to_string(), 0.9), ("c".to_string(), 0.8)];
        assert_eq!(select_top_members(&c, 2), ["b", "c"]);
        assert!(matches!(Ensemble::new(vec![]), Err(Error::EmptyInput(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

        proptest! {
            #[test]
            fn identical_members_decode_like_one(seed in 0u64..10_000, m in 1usize..6) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let map = random_map(Dims3::new(3, 2, 4), &mut rng);
                let avg = ensemble_average(&vec![map.clone(); m]).unwrap();
                prop_assert_eq!(decode_labels(&avg), decode_labels(&map));
            }

            #[test]
            fn average_stays_normalized(seed in 0u64..10_000, m in 1usize..5) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let maps: Vec<ProbMap> = (0..m).map(|_| random_map(Dims3::new(2, 3, 3), &mut rng)).collect();
                let avg = ensemble_average(&maps).unwrap();
                prop_assert!(ProbMap::new(avg.into_tensor(), [1.0; 3]).is_ok());
            }
        }
    }
}
