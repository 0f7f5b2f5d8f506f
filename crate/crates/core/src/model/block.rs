use rand::Rng;

use crate::error::Result;
use crate::nn::{
    instance_norm, instance_norm_backward, leaky_relu, leaky_relu_backward, Conv3d, Real, Tensor,
};
use crate::par::Exec;

/// Two units of 3×3×3 convolution → instance norm → leaky ReLU.
///
/// The first convolution may be strided to downsample.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock<T> {
    pub conv1: Conv3d<T>,
    pub conv2: Conv3d<T>,
}

/// Intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BlockCache<T> {
    input: Tensor<T>,
    norm1: Tensor<T>,
    inv_std1: Vec<T>,
    act1: Tensor<T>,
    norm2: Tensor<T>,
    inv_std2: Vec<T>,
}

impl<T: Real> ConvBlock<T> {
    pub fn init<R: Rng + ?Sized>(rng: &mut R, inp: usize, out: usize, stride: usize) -> Self {
        ConvBlock {
            conv1: Conv3d::init(rng, inp, out, 3, stride, 1),
            conv2: Conv3d::init(rng, out, out, 3, 1, 1),
        }
    }

    pub fn zeros(inp: usize, out: usize, stride: usize) -> Self {
        ConvBlock {
            conv1: Conv3d::zeros(inp, out, 3, stride, 1),
            conv2: Conv3d::zeros(out, out, 3, 1, 1),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.conv2.out_channels
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_cached(x, false, Exec::default())?.0)
    }

    pub fn forward_cached(
        &self,
        x: &Tensor<T>,
        record: bool,
        exec: Exec,
    ) -> Result<(Tensor<T>, Option<BlockCache<T>>)> {
        let h1 = self.conv1.forward_with(x, exec)?;
        let (norm1, inv_std1) = instance_norm(&h1, exec);
        drop(h1);
        let act1 = leaky_relu(&norm1);
        let h2 = self.conv2.forward_with(&act1, exec)?;
        let (norm2, inv_std2) = instance_norm(&h2, exec);
        let out = leaky_relu(&norm2);
        let cache = record.then(|| BlockCache {
            input: x.clone(),
            norm1,
            inv_std1,
            act1,
            norm2,
            inv_std2,
        });
        Ok((out, cache))
    }

    /// Accumulates parameter gradients into `grads`; returns the input gradient when asked.
    pub fn backward(
        &self,
        cache: &BlockCache<T>,
        dy: &Tensor<T>,
        need_dx: bool,
        grads: &mut ConvBlock<T>,
        exec: Exec,
    ) -> Result<Option<Tensor<T>>> {
        let g = leaky_relu_backward(dy, &cache.norm2);
        let g = instance_norm_backward(&g, &cache.norm2, &cache.inv_std2, exec);
        let (da1, dw2, db2) = self.conv2.backward(&cache.act1, &g, true, exec)?;
        accumulate(&mut grads.conv2, &dw2, &db2);
        let g = leaky_relu_backward(&da1.expect("requested"), &cache.norm1);
        let g = instance_norm_backward(&g, &cache.norm1, &cache.inv_std1, exec);
        let (dx, dw1, db1) = self.conv1.backward(&cache.input, &g, need_dx, exec)?;
        accumulate(&mut grads.conv1, &dw1, &db1);
        Ok(dx)
    }
}

pub(crate) fn accumulate<T: Real>(c: &mut Conv3d<T>, dw: &[T], db: &[T]) {
    c.weight.iter_mut().zip(dw).for_each(|(a, &b)| *a += b);
    c.bias.iter_mut().zip(db).for_each(|(a, &b)| *a += b);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Dims3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shape_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = ConvBlock::<f32>::init(&mut rng, 2, 8, 1);
        let y = b.forward(&Tensor::filled(2, Dims3::cube(8), 0.5)).unwrap();
        assert_eq!((y.channels(), y.dims()), (8, Dims3::cube(8)));
        let down = ConvBlock::<f32>::init(&mut rng, 2, 4, 2);
        let y = down.forward(&Tensor::filled(2, Dims3::cube(8), 0.5)).unwrap();
        assert_eq!((y.channels(), y.dims()), (4, Dims3::cube(4)));
    }

    #[test]
    fn zero_input_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = ConvBlock::<f32>::init(&mut rng, 2, 8, 1);
        let y = b.forward(&Tensor::zeros(2, Dims3::cube(8))).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    /// Single-channel chain evaluated by hand: a centre-tap kernel of weight 2
    /// followed by instance norm and leaky ReLU.
    #[test]
    fn identity_kernel_chain() {
        let d = Dims3::cube(4);
        let x: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let mut b = ConvBlock::<f64>::zeros(1, 1, 1);
        b.conv1.weight[13] = 2.0;
        b.conv2.weight[13] = 1.0;
        let y = b.forward(&Tensor::from_vec(1, d, x.clone()).unwrap()).unwrap();

        let norm = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / v.len() as f64;
            v.iter().map(|a| (a - m) / (var + 1e-5).sqrt()).collect::<Vec<_>>()
        };
        let lrelu = |v: Vec<f64>| v.into_iter().map(|a| if a > 0.0 { a } else { 0.01 * a }).collect::<Vec<_>>();
        let unit1 = lrelu(norm(&x.iter().map(|a| 2.0 * a).collect::<Vec<_>>()));
        let want = lrelu(norm(&unit1));
        for (a, b) in y.data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
