use super::{Real, Tensor};
use crate::par::Exec;

/// Variance epsilon of instance normalization.
pub const IN_EPS: f64 = 1e-5;
pub const LEAKY_SLOPE: f64 = 0.01;

/// Per-channel normalization over spatial dims (no affine parameters).
///
/// Returns the normalized tensor and `1/sqrt(var + eps)` per channel.
/// An all-zero channel normalizes to zeros.
pub fn instance_norm<T: Real>(x: &Tensor<T>, exec: Exec) -> (Tensor<T>, Vec<T>) {
    let n = x.spatial();
    let eps = T::from_f64_lossy(IN_EPS);
    let mut y = x.clone();
    let inv_stds = exec.map(x.channels(), |c| {
        let v = x.channel(c);
        let nf = T::from_usize(n).unwrap();
        let mean = v.iter().copied().sum::<T>() / nf;
        let var = v.iter().map(|&a| (a - mean) * (a - mean)).sum::<T>() / nf;
        T::one() / (var + eps).sqrt()
    });
    let means: Vec<T> = (0..x.channels())
        .map(|c| x.channel(c).iter().copied().sum::<T>() / T::from_usize(n).unwrap())
        .collect();
    exec.for_each_chunk_mut(y.data_mut(), n.max(1), |c, chunk| {
        let (m, s) = (means[c], inv_stds[c]);
        chunk.iter_mut().for_each(|a| *a = (*a - m) * s);
    });
    (y, inv_stds)
}

/// Backward of [`instance_norm`] given the normalized output `xhat`.
pub fn instance_norm_backward<T: Real>(
    dy: &Tensor<T>,
    xhat: &Tensor<T>,
    inv_std: &[T],
    exec: Exec,
) -> Tensor<T> {
    let n = dy.spatial();
    let nf = T::from_usize(n).unwrap();
    let mut dx = Tensor::zeros(dy.channels(), dy.dims());
    exec.for_each_chunk_mut(dx.data_mut(), n.max(1), |c, out| {
        let g = dy.channel(c);
        let h = xhat.channel(c);
        let mean_g = g.iter().copied().sum::<T>() / nf;
        let mean_gh = g.iter().zip(h).map(|(&a, &b)| a * b).sum::<T>() / nf;
        let s = inv_std[c];
        for ((o, &gi), &hi) in out.iter_mut().zip(g).zip(h) {
            *o = s * (gi - mean_g - hi * mean_gh);
        }
    });
    dx
}

pub fn leaky_relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let slope = T::from_f64_lossy(LEAKY_SLOPE);
    x.map(|v| if v > T::zero() { v } else { v * slope })
}

/// Backward of [`leaky_relu`] given its input.
pub fn leaky_relu_backward<T: Real>(dy: &Tensor<T>, input: &Tensor<T>) -> Tensor<T> {
    let slope = T::from_f64_lossy(LEAKY_SLOPE);
    let mut dx = dy.clone();
    dx.data_mut()
        .iter_mut()
        .zip(input.data())
        .for_each(|(g, &v)| {
            if v <= T::zero() {
                *g *= slope
            }
        });
    dx
}
