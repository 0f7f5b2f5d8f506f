//! Segmentation and feature-consistency losses with their gradients.
//!
//! All functions work on a single sample; batch losses are the mean of the
//! per-sample values. Values are accumulated in `f64` whatever the tensor type.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ForwardOutput, OutputGrads};
use crate::nn::{softmax_channels, Real, Tensor};
use crate::volume::{downsample_labels, label_to_class, SegVolume};

pub const DICE_EPS: f64 = 1e-5;
pub const PROB_FLOOR: f64 = 1e-7;

/// Weights of the Dice, cross-entropy and modality-pairing terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub dice: f64,
    pub ce: f64,
    pub mp: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            dice: 1.0,
            ce: 1.0,
            mp: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("dice", self.dice), ("ce", self.ce), ("mp", self.mp)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("loss weight {name} = {v} must be >= 0")));
            }
        }
        Ok(())
    }
}

fn check_probs<T: Real>(probs: &Tensor<T>, target: &SegVolume) -> Result<()> {
    if probs.channels() != 4 || probs.dims() != target.dims() {
        return Err(Error::ShapeMismatch(format!(
            "probabilities {}x{} vs target 4x{}",
            probs.channels(),
            probs.dims(),
            target.dims()
        )));
    }
    Ok(())
}

fn classes(target: &SegVolume) -> Vec<usize> {
    target
        .labels()
        .iter()
        .map(|&l| label_to_class(l))
        .collect()
}

/// Soft Dice loss averaged over the foreground classes (labels 1, 2, 4).
pub fn dice_loss<T: Real>(probs: &Tensor<T>, target: &SegVolume) -> Result<f64> {
    Ok(dice_with_grad(probs, target, false)?.0)
}

/// Dice loss and its gradient with respect to the probabilities.
pub fn dice_loss_grad<T: Real>(probs: &Tensor<T>, target: &SegVolume) -> Result<(f64, Tensor<T>)> {
    let (v, g) = dice_with_grad(probs, target, true)?;
    Ok((v, g.expect("requested")))
}

fn dice_with_grad<T: Real>(
    probs: &Tensor<T>,
    target: &SegVolume,
    want_grad: bool,
) -> Result<(f64, Option<Tensor<T>>)> {
    check_probs(probs, target)?;
    let cls = classes(target);
    let mut grad = want_grad.then(|| Tensor::zeros(4, probs.dims()));
    let mut loss = 0.0;
    for c in 1..4 {
        let p = probs.channel(c);
        let (mut inter, mut ps, mut ts) = (0.0, 0.0, 0.0);
        for (&pv, &k) in p.iter().zip(&cls) {
            let pv = pv.as_f64();
            ps += pv;
            if k == c {
                inter += pv;
                ts += 1.0;
            }
        }
        let num = 2.0 * inter + DICE_EPS;
        let den = ps + ts + DICE_EPS;
        loss += 1.0 - num / den;
        if let Some(g) = grad.as_mut() {
            let on = T::from_f64_lossy(-(2.0 * den - num) / (3.0 * den * den));
            let off = T::from_f64_lossy(num / (3.0 * den * den));
            for (gv, &k) in g.channel_mut(c).iter_mut().zip(&cls) {
                *gv = if k == c { on } else { off };
            }
        }
    }
    Ok((loss / 3.0, grad))
}

/// Mean of `-ln p[true class]` with probabilities clipped to `[1e-7, 1]`.
pub fn cross_entropy_loss<T: Real>(probs: &Tensor<T>, target: &SegVolume) -> Result<f64> {
    Ok(cross_entropy_loss_grad(probs, target)?.0)
}

/// Cross-entropy and its gradient with respect to the (clipped) probabilities.
pub fn cross_entropy_loss_grad<T: Real>(
    probs: &Tensor<T>,
    target: &SegVolume,
) -> Result<(f64, Tensor<T>)> {
    check_probs(probs, target)?;
    let cls = classes(target);
    let n = cls.len() as f64;
    let mut grad = Tensor::zeros(4, probs.dims());
    let mut sum = 0.0;
    for (v, &k) in cls.iter().enumerate() {
        let raw = probs.channel(k)[v].as_f64();
        let p = raw.clamp(PROB_FLOOR, 1.0);
        sum -= p.ln();
        if raw > PROB_FLOOR && raw < 1.0 {
            grad.channel_mut(k)[v] = T::from_f64_lossy(-1.0 / (n * p));
        }
    }
    Ok((sum / n, grad))
}

/// Cross-entropy computed from logits through a log-softmax, with the gradient
/// with respect to the logits.
pub fn softmax_cross_entropy<T: Real>(
    logits: &Tensor<T>,
    target: &SegVolume,
) -> Result<(f64, Tensor<T>)> {
    check_probs(logits, target)?;
    let cls = classes(target);
    let n = cls.len();
    let inv_n = 1.0 / n as f64;
    let mut grad = Tensor::zeros(4, logits.dims());
    let mut sum = 0.0;
    let src = logits.data();
    let g = grad.data_mut();
    for (v, &k) in cls.iter().enumerate() {
        let z: [f64; 4] = std::array::from_fn(|c| src[c * n + v].as_f64());
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: [f64; 4] = std::array::from_fn(|c| (z[c] - max).exp());
        let s: f64 = e.iter().sum();
        sum += s.ln() + max - z[k];
        for c in 0..4 {
            let onehot = if c == k { 1.0 } else { 0.0 };
            g[c * n + v] = T::from_f64_lossy((e[c] / s - onehot) * inv_n);
        }
    }
    Ok((sum * inv_n, grad))
}

/// Negative Pearson correlation between two feature tensors flattened over
/// channels and voxels; 0 when either is constant.
pub fn modality_pairing_loss<T: Real>(xa: &Tensor<T>, xb: &Tensor<T>) -> Result<f64> {
    Ok(pearson(xa, xb, false)?.0)
}

/// Modality-pairing loss and its gradients with respect to both inputs.
pub fn modality_pairing_loss_grad<T: Real>(
    xa: &Tensor<T>,
    xb: &Tensor<T>,
) -> Result<(f64, Tensor<T>, Tensor<T>)> {
    let (v, g) = pearson(xa, xb, true)?;
    let (ga, gb) = g.expect("requested");
    Ok((v, ga, gb))
}

fn centered<T: Real>(x: &[T]) -> (Vec<f64>, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let raw_sq: f64 = x.iter().map(|v| v.as_f64().powi(2)).sum();
    let c: Vec<f64> = x.iter().map(|v| v.as_f64() - mean).collect();
    let ss = c.iter().map(|v| v * v).sum();
    (c, ss, raw_sq)
}

#[allow(clippy::type_complexity)]
fn pearson<T: Real>(
    xa: &Tensor<T>,
    xb: &Tensor<T>,
    want_grad: bool,
) -> Result<(f64, Option<(Tensor<T>, Tensor<T>)>)> {
    if !xa.same_shape(xb) {
        return Err(Error::ShapeMismatch(format!(
            "pairing features {}x{} vs {}x{}",
            xa.channels(),
            xa.dims(),
            xb.channels(),
            xb.dims()
        )));
    }
    let zeros = || (Tensor::zeros(xa.channels(), xa.dims()), Tensor::zeros(xb.channels(), xb.dims()));
    let (a, saa, ra) = centered(xa.data());
    let (b, sbb, rb) = centered(xb.data());
    // constant up to rounding
    if saa <= 1e-24 * ra || sbb <= 1e-24 * rb {
        return Ok((0.0, want_grad.then(zeros)));
    }
    let sab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let norm = (saa * sbb).sqrt();
    let r = (sab / norm).clamp(-1.0, 1.0);
    let grads = want_grad.then(|| {
        let (mut ga, mut gb) = zeros();
        for (((g, &ai), &bi), h) in ga.data_mut().iter_mut().zip(&a).zip(&b).zip(gb.data_mut()) {
            *g = T::from_f64_lossy(-(bi / norm - r * ai / saa));
            *h = T::from_f64_lossy(-(ai / norm - r * bi / sbb));
        }
        (ga, gb)
    });
    Ok((-r, grads))
}

/// Weighted sum of Dice, cross-entropy and modality-pairing terms.
pub fn total_loss<T: Real>(
    probs: &Tensor<T>,
    target: &SegVolume,
    xa: &Tensor<T>,
    xb: &Tensor<T>,
    weights: &LossWeights,
) -> Result<f64> {
    Ok(weights.dice * dice_loss(probs, target)?
        + weights.ce * cross_entropy_loss(probs, target)?
        + weights.mp * modality_pairing_loss(xa, xb)?)
}

/// Normalized weights `2^-s` for levels `1..=levels`.
pub fn deep_supervision_weights(levels: usize) -> Vec<f64> {
    let raw: Vec<f64> = (1..=levels).map(|s| 0.5f64.powi(s as i32)).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / sum).collect()
}

/// Weighted Dice + CE of auxiliary probability maps against downsampled targets.
///
/// `aux_probs[s - 1]` is compared with `target` downsampled by `2^s`.
pub fn deep_supervision_loss<T: Real>(aux_probs: &[Tensor<T>], target: &SegVolume) -> Result<f64> {
    let weights = deep_supervision_weights(aux_probs.len());
    let mut total = 0.0;
    for (i, (p, w)) in aux_probs.iter().zip(weights).enumerate() {
        let t = downsample_labels(target, 1 << (i + 1))?;
        check_probs(p, &t)
            .map_err(|_| Error::ShapeMismatch(format!("aux level {} does not match target", i + 1)))?;
        total += w * (dice_loss(p, &t)? + cross_entropy_loss(p, &t)?);
    }
    Ok(total)
}

/// Gradient of a loss on softmax probabilities pulled back to the logits.
pub fn softmax_backward<T: Real>(probs: &Tensor<T>, dprobs: &Tensor<T>) -> Tensor<T> {
    let c = probs.channels();
    let n = probs.spatial();
    let p = probs.data();
    let g = dprobs.data();
    let mut out = Tensor::zeros(c, probs.dims());
    let o = out.data_mut();
    for v in 0..n {
        let dot: f64 = (0..c).map(|k| p[k * n + v].as_f64() * g[k * n + v].as_f64()).sum();
        for k in 0..c {
            let i = k * n + v;
            o[i] = T::from_f64_lossy(p[i].as_f64() * (g[i].as_f64() - dot));
        }
    }
    out
}

/// Loss components of one training sample.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub dice: f64,
    pub ce: f64,
    pub mp: f64,
    pub deep_supervision: f64,
}

impl LossBreakdown {
    pub fn add(&mut self, o: &LossBreakdown) {
        self.total += o.total;
        self.dice += o.dice;
        self.ce += o.ce;
        self.mp += o.mp;
        self.deep_supervision += o.deep_supervision;
    }

    pub fn scale(&mut self, f: f64) {
        self.total *= f;
        self.dice *= f;
        self.ce *= f;
        self.mp *= f;
        self.deep_supervision *= f;
    }
}

fn dice_ce_on_logits<T: Real>(logits: &Tensor<T>, target: &SegVolume) -> Result<(f64, f64, Tensor<T>, Tensor<T>)> {
    let probs = softmax_channels(logits);
    let (dice, dp) = dice_loss_grad(&probs, target)?;
    let (ce, dce) = softmax_cross_entropy(logits, target)?;
    Ok((dice, ce, softmax_backward(&probs, &dp), dce))
}

/// Full training objective of one sample and the gradients of every network output.
///
/// Cross-entropy is evaluated through a log-softmax of the logits. The pairing
/// term applies only when the network exposes two branch features.
pub fn training_objective<T: Real>(
    out: &ForwardOutput<T>,
    target: &SegVolume,
    weights: &LossWeights,
) -> Result<(LossBreakdown, OutputGrads<T>)> {
    let (dice, ce, mut g_logits, g_ce) = dice_ce_on_logits(&out.logits, target)?;
    scale_into(&mut g_logits, weights.dice, &g_ce, weights.ce);

    let mut mp = 0.0;
    let mut g_features = None;
    if out.features.len() == 2 && weights.mp != 0.0 {
        let (v, ga, gb) = modality_pairing_loss_grad(&out.features[0], &out.features[1])?;
        mp = v;
        let w = T::from_f64_lossy(weights.mp);
        g_features = Some(vec![ga.map(|x| x * w), gb.map(|x| x * w)]);
    } else if out.features.len() == 2 {
        mp = modality_pairing_loss(&out.features[0], &out.features[1])?;
    }

    let ds_w = deep_supervision_weights(out.aux_logits.len());
    let mut ds = 0.0;
    let mut g_aux = Vec::with_capacity(out.aux_logits.len());
    for (i, (logits, w)) in out.aux_logits.iter().zip(ds_w).enumerate() {
        let t = downsample_labels(target, 1 << (i + 1))?;
        let (d, c, mut g, gc) = dice_ce_on_logits(logits, &t)?;
        ds += w * (d + c);
        scale_into(&mut g, w, &gc, w);
        g_aux.push(g);
    }

    let total = weights.dice * dice + weights.ce * ce + weights.mp * mp + ds;
    Ok((
        LossBreakdown {
            total,
            dice,
            ce,
            mp,
            deep_supervision: ds,
        },
        OutputGrads {
            logits: g_logits,
            aux_logits: g_aux,
            features: g_features,
        },
    ))
}

/// `acc = wa * acc + wb * other`
fn scale_into<T: Real>(acc: &mut Tensor<T>, wa: f64, other: &Tensor<T>, wb: f64) {
    let (wa, wb) = (T::from_f64_lossy(wa), T::from_f64_lossy(wb));
    for (a, &b) in acc.data_mut().iter_mut().zip(other.data()) {
        *a = wa * *a + wb * b;
    }
}
