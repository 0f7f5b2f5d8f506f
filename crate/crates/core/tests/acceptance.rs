//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line.

use std::collections::VecDeque;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use mpseg::inference::{decode_labels, ensemble_average, predict_stack, Ensemble, Member, ProbMap, SlidingWindow};
use mpseg::losses::{
    cross_entropy_loss, cross_entropy_loss_grad, dice_loss, dice_loss_grad, modality_pairing_loss,
    modality_pairing_loss_grad, training_objective, LossWeights,
};
use mpseg::metrics::{
    dice, evaluate_case, hd95, sensitivity, soft_dice, specificity, summarize, write_summary_csv,
    HdPenalty, Region, RegionMask, Stats, STAT_LABELS,
};
use mpseg::model::{Architecture, BranchInput, ConvBlock, Network, NetworkConfig};
use mpseg::nn::{softmax_channels, Tensor};
use mpseg::par::Exec;
use mpseg::phantom::{generate_dataset, generate_phantom, phantom_case_id, PhantomSpec};
use mpseg::postproc::{connected_components, enforce_et_threshold, postprocess, remove_small_components, Connectivity, PostprocessConfig};
use mpseg::training::{lr_schedule, make_folds, train_fold, Checkpoint, ExperimentConfig, TrainConfig, TrainingCase};
use mpseg::volume::{read_nifti, write_nifti, Dims3, SegVolume, Volume, VolumeData};
use mpseg::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run(id: u32, title: &str, limit: Duration, body: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(msg)
    });
    let took = start.elapsed();
    let outcome = outcome.and_then(|()| {
        ensure(took < limit, || format!("took {took:.1?}, limit {limit:?}"))
    });
    match &outcome {
        Ok(()) => println!("criterion {id:>2} PASS  {title} ({took:.1?})"),
        Err(e) => println!("criterion {id:>2} FAIL  {title} ({took:.1?}): {e}"),
    }
    outcome.is_ok()
}

fn tensor(channels: usize, dims: Dims3, data: Vec<f64>) -> Tensor<f64> {
    Tensor::from_vec(channels, dims, data).unwrap()
}

fn random_tensor(rng: &mut ChaCha8Rng, channels: usize, dims: Dims3) -> Tensor<f64> {
    tensor(channels, dims, (0..channels * dims.len()).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn random_seg(rng: &mut ChaCha8Rng, dims: Dims3) -> SegVolume {
    let labels = (0..dims.len()).map(|_| [0u8, 1, 2, 4][rng.random_range(0..4)]).collect();
    SegVolume::new(dims, [1.0; 3], labels).unwrap()
}

/// Central difference of `f` with respect to `x[i]`.
fn central_diff(x: &mut [f64], i: usize, h: f64, f: &mut impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + h;
    let up = f(x);
    x[i] = orig - h;
    let down = f(x);
    x[i] = orig;
    (up - down) / (2.0 * h)
}

/// Relative error with an absolute floor for gradients that vanish exactly.
fn grad_close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= 1e-3 * analytic.abs().max(numeric.abs()) + 1e-6
}

fn check_grad(name: &str, x0: &[f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Check {
    let mut x = x0.to_vec();
    for i in 0..x.len() {
        let n = central_diff(&mut x, i, 1e-6, &mut f);
        ensure(grad_close(analytic[i], n), || format!("{name}[{i}]: analytic {} vs numeric {n}", analytic[i]))?;
    }
    Ok(())
}

fn criterion_1() -> Check {
    let d = Dims3::new(1, 1, 3);
    let mp = |a: Vec<f64>, b: Vec<f64>| modality_pairing_loss(&tensor(1, d, a), &tensor(1, d, b)).unwrap();
    let x = vec![0.5, -1.0, 2.0];
    let fixtures = [
        (mp(x.clone(), x.clone()), -1.0),
        (mp(x.clone(), x.iter().map(|v| -v).collect()), 1.0),
        (mp(vec![1.0, 2.0, 3.0], vec![1.0, 3.0, 2.0]), -0.5),
    ];
    for (got, want) in fixtures {
        ensure((got - want).abs() <= 1e-12, || format!("fixture gave {got}, expected {want}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..1000 {
        let dims = Dims3::new(1, rng.random_range(1..=4), rng.random_range(2..=8));
        let c = rng.random_range(1..=3);
        let a = random_tensor(&mut rng, c, dims);
        let b = random_tensor(&mut rng, c, dims);
        let base = modality_pairing_loss(&a, &b).unwrap();
        let (s, t) = (rng.random_range(0.05..20.0), rng.random_range(-10.0..10.0));
        let (s2, t2) = (rng.random_range(0.05..20.0), rng.random_range(-10.0..10.0));
        let moved = modality_pairing_loss(&a.map(|v| s * v + t), &b.map(|v| s2 * v + t2)).unwrap();
        ensure((moved - base).abs() <= 1e-6, || format!("trial {trial}: {base} vs {moved} after affine maps"))?;
        ensure((-1.0 - 1e-12..=1.0 + 1e-12).contains(&base), || format!("trial {trial}: {base} outside [-1, 1]"))?;
    }
    Ok(())
}

fn tiny_network() -> Network<f64> {
    Network::new(NetworkConfig {
        architecture: Architecture::Pairing,
        depth: 2,
        base_channels: 1,
        max_channels: 2,
        num_classes: 4,
        deep_supervision_levels: 0,
        seed: 5,
    })
    .unwrap()
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dims = Dims3::new(2, 2, 3);
    let target = random_seg(&mut rng, dims);
    let probs = softmax_channels(&random_tensor(&mut rng, 4, dims).map(|v| 2.0 * v));
    let with = |data: &[f64]| tensor(4, dims, data.to_vec());

    let (_, g) = dice_loss_grad(&probs, &target).unwrap();
    check_grad("dice", probs.data(), g.data(), |p| dice_loss(&with(p), &target).unwrap())?;
    let (_, g) = cross_entropy_loss_grad(&probs, &target).unwrap();
    check_grad("ce", probs.data(), g.data(), |p| cross_entropy_loss(&with(p), &target).unwrap())?;

    let fd = Dims3::new(1, 3, 4);
    let xa = random_tensor(&mut rng, 2, fd);
    let xb = random_tensor(&mut rng, 2, fd);
    let (_, ga, gb) = modality_pairing_loss_grad(&xa, &xb).unwrap();
    check_grad("mp.a", xa.data(), ga.data(), |a| modality_pairing_loss(&tensor(2, fd, a.to_vec()), &xb).unwrap())?;
    check_grad("mp.b", xb.data(), gb.data(), |b| modality_pairing_loss(&xa, &tensor(2, fd, b.to_vec())).unwrap())?;

    let net = tiny_network();
    let n = net.num_params();
    ensure(n <= 1000, || format!("gradient-check network has {n} parameters"))?;
    let pd = Dims3::cube(4);
    let input = BranchInput::pair(random_tensor(&mut rng, 2, pd), random_tensor(&mut rng, 2, pd));
    let target = random_seg(&mut rng, pd);
    let weights = LossWeights::default();
    let (out, tape) = net.forward_train(&input).unwrap();
    let (_, g_out) = training_objective(&out, &target, &weights).unwrap();
    let grads = net.backward(&tape, &g_out).unwrap();
    let names: Vec<String> = net.params().into_iter().map(|(k, _)| k).collect();
    let mut probe = net.clone();
    for name in &names {
        let analytic = grads.param(name).unwrap().clone();
        let x0 = net.param(name).unwrap().clone();
        let mut x = x0.clone();
        for i in 0..x.len() {
            let mut loss = |v: &[f64]| {
                probe.param_mut(name).unwrap().copy_from_slice(v);
                let out = probe.forward(&input).unwrap();
                training_objective(&out, &target, &weights).unwrap().0.total
            };
            let num = central_diff(&mut x, i, 1e-5, &mut loss);
            ensure(grad_close(analytic[i], num), || {
                format!("{name}[{i}]: analytic {} vs numeric {num}", analytic[i])
            })?;
        }
        probe.param_mut(name).unwrap().copy_from_slice(&x0);
    }
    Ok(())
}

fn criterion_3() -> Check {
    let cfg = TrainConfig::default();
    let lr = |e| lr_schedule(e, &cfg).unwrap();
    ensure((lr(0) - 0.0005).abs() < 1e-15, || format!("lr(0) = {}", lr(0)))?;
    ensure((lr(19) - 0.01).abs() < 1e-12, || format!("lr(19) = {}", lr(19)))?;
    ensure((lr(510) - 0.005359).abs() <= 1e-6, || format!("lr(510) = {}", lr(510)))?;
    ensure(lr(cfg.epoch_max - 1) < 1e-3, || format!("lr(last) = {}", lr(cfg.epoch_max - 1)))?;
    ensure((lr(19) - lr(20)).abs() < 1e-12, || format!("warmup boundary {} vs {}", lr(19), lr(20)))?;
    ensure(
        matches!(lr_schedule(cfg.epoch_max, &cfg), Err(Error::EpochOutOfRange { .. })),
        || "epoch_max accepted".into(),
    )
}

fn differs(a: &Tensor<f64>, b: &Tensor<f64>) -> bool {
    a.data().iter().zip(b.data()).any(|(x, y)| (x - y).abs() > 1e-12)
}

fn leaky(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.01 * v
    }
}

fn norm_leaky(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    x.iter().map(|v| leaky((v - mean) / (var + 1e-5).sqrt())).collect()
}

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let d8 = Dims3::cube(8);
    let block = ConvBlock::<f64>::init(&mut rng, 2, 8, 1);
    let y = block.forward(&random_tensor(&mut rng, 2, d8)).unwrap();
    ensure(y.channels() == 8 && y.dims() == d8, || format!("conv block output {}x{}", y.channels(), y.dims()))?;
    let mut zero_bias = block.clone();
    zero_bias.conv1.bias.iter_mut().for_each(|b| *b = 0.0);
    zero_bias.conv2.bias.iter_mut().for_each(|b| *b = 0.0);
    let z = zero_bias.forward(&Tensor::zeros(2, d8)).unwrap();
    ensure(z.data().iter().all(|&v| v == 0.0), || "zero input gave nonzero output".into())?;
    let mut ident = ConvBlock::<f64>::zeros(1, 1, 1);
    ident.conv1.weight[13] = 1.0;
    ident.conv2.weight[13] = 1.0;
    let x = random_tensor(&mut rng, 1, Dims3::cube(4));
    let got = ident.forward(&x).unwrap();
    let want = norm_leaky(&norm_leaky(x.data()));
    ensure(got.data().iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-12), || "identity chain mismatch".into())?;

    let cfg = NetworkConfig {
        seed: 3,
        ..NetworkConfig::desk_scale(Architecture::Pairing)
    };
    let net = Network::<f64>::new(cfg.clone()).unwrap();
    let d16 = Dims3::cube(16);
    let input = BranchInput::pair(random_tensor(&mut rng, 2, d16), random_tensor(&mut rng, 2, d16));
    let enc = net.encode(&input).unwrap();
    for (l, (c, s)) in [(8, 16), (16, 8), (32, 4)].into_iter().enumerate() {
        for f in &enc[l] {
            ensure(f.channels() == c && f.dims() == Dims3::cube(s), || {
                format!("encoder level {l}: {}x{}", f.channels(), f.dims())
            })?;
        }
    }
    for (zeroed, watched) in [(1usize, 0usize), (0, 1)] {
        let mut cut = input.clone();
        cut.branches[zeroed] = Tensor::zeros(2, d16);
        let enc2 = net.encode(&cut).unwrap();
        ensure(differs(&enc[1][watched], &enc2[1][watched]), || {
            format!("zeroing branch {zeroed} left branch {watched} level-1 features unchanged")
        })?;
    }
    let mut swapped = net.clone();
    swapped.swap_branches();
    let flipped = BranchInput::pair(input.branches[1].clone(), input.branches[0].clone());
    let (o1, o2) = (net.forward(&input).unwrap(), swapped.forward(&flipped).unwrap());
    ensure(o1.features[0] == o2.features[1] && o1.features[1] == o2.features[0], || "swap not mirrored".into())?;

    let dec = net.decode(&enc).unwrap();
    ensure(dec[0].iter().all(|f| f.channels() == 8 && f.dims() == d16), || "decoder output shape".into())?;
    let mut enc_cut = enc.clone();
    for level in enc_cut.iter_mut() {
        level[1] = Tensor::zeros(level[1].channels(), level[1].dims());
    }
    ensure(differs(&dec[0][0], &net.decode(&enc_cut).unwrap()[0][0]), || "decoder A ignores encoder B".into())?;

    // decoder level 0 of branch a reads [up(a), skip(a), skip(b)]
    let shallow = Network::<f64>::new(NetworkConfig {
        depth: 2,
        deep_supervision_levels: 0,
        ..cfg.clone()
    })
    .unwrap();
    let enc = shallow.encode(&input).unwrap();
    let c0 = 8;
    let kdim = 3 * c0 * 27;
    let bump = |enc: &[Vec<Tensor<f64>>], level: usize, b: usize| {
        let mut e = enc.to_vec();
        e[level][b] = e[level][b].map(|v| v + 0.37 * v.sin() + 0.1);
        e
    };
    for (slice, moved_by) in [(0usize, (1usize, 0usize)), (1, (0, 0)), (2, (0, 1))] {
        let mut masked = shallow.clone();
        let w = masked.param_mut("decoder.0.a.conv1.weight").unwrap();
        for o in 0..c0 {
            for k in slice * c0 * 27..(slice + 1) * c0 * 27 {
                w[o * kdim + k] = 0.0;
            }
        }
        let base = masked.decode(&enc).unwrap();
        let (level, b) = moved_by;
        let after = masked.decode(&bump(&enc, level, b)).unwrap();
        ensure(!differs(&base[0][0], &after[0][0]), || {
            format!("masking input slice {slice} did not remove dependence on level {level} branch {b}")
        })?;
        let unmasked = shallow.decode(&bump(&enc, level, b)).unwrap();
        ensure(differs(&shallow.decode(&enc).unwrap()[0][0], &unmasked[0][0]), || {
            format!("level {level} branch {b} does not reach decoder a")
        })?;
    }

    let fa = random_tensor(&mut rng, 8, d16);
    let fb = random_tensor(&mut rng, 8, d16);
    let logits = net.fuse_and_classify(&[fa.clone(), fb.clone()]).unwrap();
    ensure(logits.channels() == 4 && logits.dims() == d16, || "fused logits shape".into())?;
    let p = softmax_channels(&logits);
    ensure(
        (0..d16.len()).all(|i| ((0..4).map(|c| p.channel(c)[i]).sum::<f64>() - 1.0).abs() < 1e-5),
        || "softmax does not sum to 1".into(),
    )?;
    let mut perm = net.clone();
    let w = perm.param_mut("fuse.weight").unwrap();
    for o in 0..4 {
        let row = &mut w[o * 16..(o + 1) * 16];
        let (l, r) = row.split_at_mut(8);
        l.swap_with_slice(r);
    }
    let permuted = perm.fuse_and_classify(&[fb.clone(), fa.clone()]).unwrap();
    ensure(!differs(&logits, &permuted), || "fusion not permutation-consistent".into())?;

    let head = net.deep_supervision_head(1, &[Tensor::zeros(16, Dims3::cube(8)), Tensor::zeros(16, Dims3::cube(8))]).unwrap();
    let bias = net.param("ds.1.bias").unwrap();
    ensure(head.channels() == 4 && head.dims() == Dims3::cube(8), || "head shape".into())?;
    ensure((0..4).all(|c| head.channel(c).iter().all(|&v| v == bias[c])), || "zero features must give the bias".into())?;
    let deep = Network::<f64>::new(NetworkConfig {
        depth: 4,
        base_channels: 2,
        deep_supervision_levels: 2,
        ..cfg.clone()
    })
    .unwrap();
    let mut deep2 = deep.clone();
    deep2.param_mut("ds.1.weight").unwrap().iter_mut().for_each(|v| *v += 1.0);
    let (a, b) = (deep.forward(&input).unwrap(), deep2.forward(&input).unwrap());
    ensure(a.aux_logits[1] == b.aux_logits[1] && a.aux_logits[0] != b.aux_logits[0], || "heads share parameters".into())?;

    let d32 = Dims3::cube(32);
    let big = BranchInput::pair(random_tensor(&mut rng, 2, d32), random_tensor(&mut rng, 2, d32));
    let out = net.forward(&big).unwrap();
    ensure(out.logits.channels() == 4 && out.logits.dims() == d32, || "main logits shape".into())?;
    ensure(out.aux_logits.len() == 1 && out.aux_logits[0].dims() == Dims3::cube(16), || "aux logits shape".into())?;
    ensure(out == net.forward(&big).unwrap(), || "forward not deterministic".into())?;

    let vanilla = Network::<f64>::vanilla(cfg.clone()).unwrap();
    let stack = random_tensor(&mut rng, 4, d32);
    let vo = vanilla.forward(&BranchInput::single(stack)).unwrap();
    ensure(vo.logits.channels() == 4 && vo.logits.dims() == d32, || "vanilla logits shape".into())?;
    ensure(vanilla.num_params() < net.num_params(), || "vanilla must be smaller".into())?;
    ensure(
        vanilla.params() == Network::<f64>::vanilla(cfg).unwrap().params(),
        || "vanilla init not deterministic".into(),
    )
}

fn overfit_phantoms() -> Vec<TrainingCase> {
    (0..4)
        .map(|i| {
            let spec = PhantomSpec {
                seed: i as u64,
                ..Default::default()
            };
            TrainingCase::prepare(&generate_phantom(phantom_case_id(i), &spec).unwrap()).unwrap()
        })
        .collect()
}

fn mean_wt_soft_dice(net: &Network<f32>, cases: &[TrainingCase], window: &SlidingWindow) -> f64 {
    let mut sum = 0.0;
    for c in cases {
        let p = predict_stack(net, &c.stack, window, Exec::default()).unwrap();
        let wt: Vec<f32> = p.channel(0).iter().map(|&b| 1.0 - b).collect();
        sum += soft_dice(&wt, &RegionMask::from_seg(&c.labels, Region::WT));
    }
    sum / cases.len() as f64
}

fn overfit_config(arch: Architecture) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk_scale(NetworkConfig {
        seed: 1,
        ..NetworkConfig::desk_scale(arch)
    });
    let t = &mut cfg.training;
    t.patch_size = [32; 3];
    t.batch_size = 2;
    t.epoch_max = 30;
    t.iterations_per_epoch = 10;
    t.warmup_epochs = 2;
    t.lr_min = 0.005;
    t.lr_max = 0.01;
    t.validate_every = 30;
    cfg
}

fn criterion_5() -> Check {
    let cases = overfit_phantoms();
    let dir = tempfile::tempdir().unwrap();
    let mut scores = Vec::new();
    for (arch, floor) in [(Architecture::Pairing, 0.90), (Architecture::Vanilla, 0.85)] {
        let cfg = overfit_config(arch);
        let t = &cfg.training;
        ensure(t.epoch_max * t.iterations_per_epoch <= 300, || "budget exceeds 300 iterations".into())?;
        let out = train_fold(&cases, &[], &cfg, dir.path().join(arch.to_string()), Exec::default()).unwrap();
        let score = mean_wt_soft_dice(&out.network, &cases, &cfg.inference);
        scores.push(format!("{arch} {score:.4}"));
        ensure(score >= floor, || format!("{arch}: WT soft Dice {score:.4} < {floor}"))?;
    }
    println!("    training WT soft Dice: {}", scores.join(", "));
    Ok(())
}

/// Breadth-first flood fill with ids in raster order of first voxel.
fn flood_fill(mask: &[bool], dims: Dims3) -> Vec<u32> {
    let mut ids = vec![0u32; mask.len()];
    let mut next = 0;
    let [d, h, w] = dims.as_array().map(|v| v as isize);
    for start in 0..mask.len() {
        if !mask[start] || ids[start] != 0 {
            continue;
        }
        next += 1;
        ids[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            let [z, y, x] = dims.coords(v).map(|c| c as isize);
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nz, ny, nx) = (z + dz, y + dy, x + dx);
                        if nz < 0 || ny < 0 || nx < 0 || nz >= d || ny >= h || nx >= w {
                            continue;
                        }
                        let n = dims.index(nz as usize, ny as usize, nx as usize);
                        if mask[n] && ids[n] == 0 {
                            ids[n] = next;
                            queue.push_back(n);
                        }
                    }
                }
            }
        }
    }
    ids
}

fn seg_with(dims: Dims3, voxels: impl IntoIterator<Item = (usize, u8)>) -> SegVolume {
    let mut labels = vec![0u8; dims.len()];
    for (i, l) in voxels {
        labels[i] = l;
    }
    SegVolume::new(dims, [1.0; 3], labels).unwrap()
}

fn criterion_6() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let d = Dims3::cube(20);
    for trial in 0..100 {
        let density = rng.random_range(0.02..0.4);
        let mask: Vec<bool> = (0..d.len()).map(|_| rng.random_bool(density)).collect();
        let got = connected_components(&mask, d, Connectivity::TwentySix);
        ensure(got.ids == flood_fill(&mask, d), || format!("trial {trial}: labeling differs from flood fill"))?;
    }
    let d = Dims3::cube(12);
    let line = |n: usize, l: u8| (0..n).map(move |x| (d.index(5, 5, x), l));
    let five = seg_with(d, line(5, 2));
    ensure(remove_small_components(&five, 10, Connectivity::TwentySix).count(2) == 0, || "5-voxel blob kept".into())?;
    let ten = seg_with(d, line(10, 2));
    ensure(remove_small_components(&ten, 10, Connectivity::TwentySix) == ten, || "10-voxel blob removed".into())?;
    let big = Dims3::cube(10);
    let et = |n: usize| SegVolume::new(big, [1.0; 3], (0..1000).map(|i| if i < n { 4 } else { 2 }).collect()).unwrap();
    let fixed = enforce_et_threshold(&et(499), 500);
    ensure(fixed.count(4) == 0 && fixed.count(1) == 499, || "499 ET voxels not converted".into())?;
    ensure(enforce_et_threshold(&et(500), 500) == et(500), || "500 ET voxels changed".into())?;

    let cfg = PostprocessConfig::default();
    for trial in 0..100 {
        let dims = Dims3::cube(20);
        let fg = rng.random_range(0.01..0.3);
        let labels = (0..dims.len())
            .map(|_| if rng.random_bool(fg) { [1u8, 2, 4, 4][rng.random_range(0..4)] } else { 0 })
            .collect();
        let seg = SegVolume::new(dims, [1.0; 3], labels).unwrap();
        let once = postprocess(&seg, &cfg);
        ensure(postprocess(&once, &cfg) == once, || format!("trial {trial}: postprocess not idempotent"))?;
    }
    Ok(())
}

fn surface_oracle(mask: &[bool], dims: Dims3) -> Vec<[usize; 3]> {
    let [d, h, w] = dims.as_array();
    let on = |z: isize, y: isize, x: isize| {
        z >= 0
            && y >= 0
            && x >= 0
            && (z as usize) < d
            && (y as usize) < h
            && (x as usize) < w
            && mask[dims.index(z as usize, y as usize, x as usize)]
    };
    (0..mask.len())
        .filter(|&i| mask[i])
        .map(|i| dims.coords(i))
        .filter(|&[z, y, x]| {
            let (z, y, x) = (z as isize, y as isize, x as isize);
            [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)]
                .iter()
                .any(|&(a, b, c)| !on(z + a, y + b, x + c))
        })
        .collect()
}

fn hd95_oracle(a: &RegionMask, b: &RegionMask, spacing: [f32; 3]) -> f64 {
    let (sa, sb) = (surface_oracle(&a.mask, a.dims), surface_oracle(&b.mask, b.dims));
    let dist = |p: [usize; 3], q: [usize; 3]| {
        (0..3)
            .map(|k| ((p[k] as f64 - q[k] as f64) * f64::from(spacing[k])).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let mut all: Vec<f64> = Vec::new();
    for (from, to) in [(&sa, &sb), (&sb, &sa)] {
        for &p in from.iter() {
            all.push(to.iter().map(|&q| dist(p, q)).fold(f64::INFINITY, f64::min));
        }
    }
    all.sort_by(f64::total_cmp);
    all[(0.95 * all.len() as f64).ceil() as usize - 1]
}

fn region_mask(dims: Dims3, on: impl FnMut(usize) -> bool) -> RegionMask {
    RegionMask {
        region: Region::WT,
        dims,
        mask: (0..dims.len()).map(on).collect(),
    }
}

fn criterion_7() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut compared = 0;
    while compared < 100 {
        let dims = Dims3::new(rng.random_range(1..=12), rng.random_range(1..=12), rng.random_range(1..=12));
        let spacing = [0.5f32, 1.0, 2.0].map(|_| [0.5f32, 1.0, 2.0][rng.random_range(0..3)]);
        let (pa, pb) = (rng.random_range(0.02..0.6), rng.random_range(0.02..0.6));
        let a = region_mask(dims, |_| rng.random_bool(pa));
        let b = region_mask(dims, |_| rng.random_bool(pb));
        if a.is_empty() || b.is_empty() {
            continue;
        }
        let got = hd95(&a, &b, spacing, HdPenalty::Diagonal).unwrap();
        let want = hd95_oracle(&a, &b, spacing);
        ensure(got == want, || format!("pair {compared} on {dims}: hd95 {got} vs oracle {want}"))?;
        compared += 1;
    }
    let d = Dims3::cube(4);
    let cube = |off: usize| region_mask(d, move |i| d.coords(i).iter().enumerate().all(|(k, &c)| (k == 2 && (off..off + 2).contains(&c)) || (k != 2 && c < 2)));
    let got = dice(&cube(0), &cube(1)).unwrap();
    ensure(got == 0.5, || format!("shifted cube Dice {got}"))?;

    let empty = region_mask(d, |_| false);
    let full = region_mask(d, |_| true);
    let one = region_mask(d, |i| i == 0);
    ensure(dice(&empty, &empty).unwrap() == 1.0, || "empty/empty Dice".into())?;
    ensure(hd95(&empty, &empty, [1.0; 3], HdPenalty::Diagonal).unwrap() == 0.0, || "empty/empty HD95".into())?;
    ensure(
        hd95(&empty, &one, [1.0; 3], HdPenalty::Diagonal).unwrap() == 48f64.sqrt(),
        || "one-empty HD95 must be the diagonal".into(),
    )?;
    ensure(sensitivity(&empty, &empty).unwrap() == 1.0, || "empty/empty sensitivity".into())?;
    ensure(sensitivity(&one, &empty).unwrap() == 0.0, || "false positives with empty reference".into())?;
    ensure(specificity(&full, &full).unwrap() == 1.0, || "specificity without negatives".into())?;
    let seg = seg_with(Dims3::cube(6), (0..20).map(|i| (i * 7, [1u8, 2, 4][i % 3])));
    let m = evaluate_case("x", &seg, &seg, [1.0; 3], HdPenalty::Diagonal).unwrap();
    ensure(
        m.regions.iter().all(|r| r.dice == 1.0 && r.hd95 == 0.0 && r.sensitivity == 1.0),
        || "self comparison not perfect".into(),
    )?;

    let s = Stats::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    ensure((s.q25, s.median, s.q75) == (1.75, 2.5, 3.25), || format!("quantiles {s:?}"))?;
    ensure(STAT_LABELS == ["Mean", "StdDev", "Median", "25quantile", "75quantile"], || "row labels".into())?;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("summary.csv");
    write_summary_csv(&path, &summarize(&[m]).unwrap()).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let labels: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    ensure(labels == STAT_LABELS, || format!("summary rows {labels:?}"))
}

fn prob_map(dims: Dims3, data: Vec<f32>) -> ProbMap {
    ProbMap::new(Tensor::from_vec(4, dims, data).unwrap(), [1.0; 3]).unwrap()
}

fn criterion_8() -> Check {
    let d = Dims3::new(1, 1, 1);
    let a = prob_map(d, vec![1.0, 0.0, 0.0, 0.0]);
    let b = prob_map(d, vec![0.0, 1.0, 0.0, 0.0]);
    ensure(ensemble_average(&[a.clone()]).unwrap() == a, || "M=1 is not the identity".into())?;
    let avg = ensemble_average(&[a.clone(), b]).unwrap();
    ensure(avg.probs().data() == [0.5, 0.5, 0.0, 0.0], || format!("{:?}", avg.probs().data()))?;
    let three: Vec<ProbMap> = [0.2f32, 0.5, 0.8].iter().map(|&p| prob_map(d, vec![1.0 - p, p, 0.0, 0.0])).collect();
    let got = ensemble_average(&three).unwrap().class(1)[0];
    ensure((got - 0.5).abs() < 1e-6, || format!("mean of 0.2, 0.5, 0.8 gave {got}"))?;

    let one_hot = |labels: &[usize]| {
        let mut data = vec![0.0f32; 4 * labels.len()];
        for (v, &c) in labels.iter().enumerate() {
            data[c * labels.len() + v] = 1.0;
        }
        data
    };
    let d2 = Dims3::cube(2);
    let truth = [0usize, 1, 2, 3, 3, 2, 1, 0];
    let anti: Vec<usize> = truth.iter().map(|c| (c + 1) % 4).collect();
    let mix = ensemble_average(&[prob_map(d2, one_hot(&truth)), prob_map(d2, one_hot(&anti))]).unwrap();
    let want: Vec<u8> = truth.iter().zip(&anti).map(|(&t, &a)| [0u8, 1, 2, 4][t.min(a)]).collect();
    ensure(decode_labels(&mix).labels() == want, || "perfect plus anti-perfect decoding".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..100 {
        let dims = Dims3::new(rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5));
        let n = dims.len();
        let mut data = vec![0.0f32; 4 * n];
        for v in 0..n {
            let raw: Vec<f32> = (0..4).map(|_| rng.random_range(0.01f32..1.0)).collect();
            let s: f32 = raw.iter().sum();
            for c in 0..4 {
                data[c * n + v] = raw[c] / s;
            }
        }
        let map = prob_map(dims, data);
        let m = rng.random_range(1..=6);
        let avg = ensemble_average(&vec![map.clone(); m]).unwrap();
        ensure(decode_labels(&avg) == decode_labels(&map), || format!("trial {trial}: M={m} changed labels"))?;
    }
    Ok(())
}

fn volumes_equal(a: &Volume, b: &Volume) -> bool {
    a.dims() == b.dims()
        && a.spacing() == b.spacing()
        && match (a.data(), b.data()) {
            (VolumeData::U8(x), VolumeData::U8(y)) => x == y,
            (VolumeData::F32(x), VolumeData::F32(y)) => {
                x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits())
            }
            _ => false,
        }
}

fn same_tree(a: &Path, b: &Path) -> Check {
    let mut names: Vec<_> = std::fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in names {
        let (pa, pb) = (a.join(&name), b.join(&name));
        if pa.is_dir() {
            same_tree(&pa, &pb)?;
        } else {
            ensure(std::fs::read(&pa).unwrap() == std::fs::read(&pb).unwrap(), || format!("{} differs", pa.display()))?;
        }
    }
    Ok(())
}

fn criterion_9() -> Check {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = Dims3::new(rng.random_range(1..=16), rng.random_range(1..=16), rng.random_range(1..=16));
        let spacing = [0.0f32; 3].map(|_| rng.random_range(0.5f32..3.0));
        let floats = Volume::from_f32(dims, spacing, (0..dims.len()).map(|_| rng.random_range(-1e3f32..1e3)).collect());
        let labels = Volume::from_u8(dims, spacing, (0..dims.len()).map(|_| [0u8, 1, 2, 4][rng.random_range(0..4)]).collect());
        for vol in [floats.unwrap(), labels.unwrap()] {
            for ext in ["nii", "nii.gz"] {
                let path = dir.path().join(format!("v{seed}.{ext}"));
                write_nifti(&vol, &path).unwrap();
                let back = read_nifti(&path).unwrap();
                ensure(volumes_equal(&vol, &back), || format!("seed {seed} {ext} {:?} round trip differs", vol.dtype()))?;
            }
        }
    }
    let spec = PhantomSpec {
        seed: 9,
        dims: [24; 3],
        ..Default::default()
    };
    ensure(generate_phantom("p", &spec).unwrap() == generate_phantom("p", &spec).unwrap(), || "phantom differs".into())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    generate_dataset(3, &spec, &a).unwrap();
    generate_dataset(3, &spec, &b).unwrap();
    same_tree(&a, &b)
}

fn criterion_10() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let template = PhantomSpec {
        seed: 100,
        dims: [48; 3],
        ..Default::default()
    };
    let ids = generate_dataset(8, &template, &data).unwrap();
    let (test_ids, pool) = ids.split_at(2);
    let folds = make_folds(pool, 2, 0).unwrap();
    let load = |ids: &[String]| -> Vec<TrainingCase> {
        ids.iter()
            .map(|id| TrainingCase::prepare(&mpseg::volume::load_case(&data, id).unwrap()).unwrap())
            .collect()
    };
    let mut cfg = overfit_config(Architecture::Pairing);
    cfg.training.num_folds = 2;
    cfg.training.epoch_max = 20;
    cfg.training.validate_every = 10;
    let mut members = Vec::new();
    for fold in &folds {
        cfg.training.fold = fold.index;
        let out_dir = dir.path().join(format!("fold_{}", fold.index));
        let out = train_fold(&load(&fold.train), &load(&fold.val), &cfg, &out_dir, Exec::default()).unwrap();
        let ck = Checkpoint::load(&out.best_checkpoint).unwrap();
        members.push(Member {
            name: format!("fold_{}", fold.index),
            network: ck.network().unwrap(),
        });
    }
    let ensemble = Ensemble::new(members).unwrap();
    let mut rows = Vec::new();
    for id in test_ids {
        let case = mpseg::volume::load_case(&data, id).unwrap();
        let probs = ensemble.predict(&case, &cfg.inference, Exec::default()).unwrap();
        let seg = postprocess(&decode_labels(&probs), &cfg.postprocess);
        let reference = case.labels().unwrap();
        rows.push(evaluate_case(id.clone(), &seg, reference, reference.spacing(), HdPenalty::Diagonal).unwrap());
    }
    let summary = summarize(&rows).unwrap();
    let path = dir.path().join("summary.csv");
    write_summary_csv(&path, &summary).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    for line in text.lines().skip(1) {
        ensure(
            line.split(',').skip(1).all(|v| v.parse::<f64>().is_ok_and(f64::is_finite)),
            || format!("non-finite summary row {line}"),
        )?;
    }
    let wt = summary.get(mpseg::metrics::Metric::Dice, Region::WT).mean;
    let per_region: Vec<String> = Region::ALL
        .iter()
        .map(|&r| format!("{} {:.3}", r.name(), summary.get(mpseg::metrics::Metric::Dice, r).mean))
        .collect();
    println!("    held-out Dice: {}", per_region.join(", "));
    ensure(wt >= 0.7, || format!("held-out WT Dice {wt:.4} < 0.7"))?;
    Ok(())
}

fn main() {
    let min = |m: u64| Duration::from_secs(60 * m);
    let results = [
        run(1, "pairing loss fixtures and affine invariance", Duration::from_secs(10), criterion_1),
        run(2, "finite-difference gradient checks", min(5), criterion_2),
        run(3, "learning-rate schedule", Duration::from_secs(1), criterion_3),
        run(4, "architecture shapes and cross-branch signal flow", min(1), criterion_4),
        run(5, "desk-scale overfit of both architectures", min(30), criterion_5),
        run(6, "post-processing oracle, boundaries and idempotence", min(2), criterion_6),
        run(7, "metric oracles and conventions", min(2), criterion_7),
        run(8, "ensemble averaging and decoding", min(1), criterion_8),
        run(9, "NIfTI round trip and phantom determinism", min(2), criterion_9),
        run(10, "phantom to report end to end", min(45), criterion_10),
    ];
    let passed = results.iter().filter(|&&r| r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
