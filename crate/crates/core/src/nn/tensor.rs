use super::Real;
use crate::error::{Error, Result};
use crate::volume::Dims3;

/// Dense channels × depth × height × width array for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    channels: usize,
    dims: Dims3,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(channels: usize, dims: Dims3) -> Self {
        Tensor {
            channels,
            dims,
            data: vec![T::zero(); channels * dims.len()],
        }
    }

    pub fn filled(channels: usize, dims: Dims3, v: T) -> Self {
        Tensor {
            channels,
            dims,
            data: vec![v; channels * dims.len()],
        }
    }

    pub fn from_vec(channels: usize, dims: Dims3, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * dims.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {channels}x{dims}",
                data.len()
            )));
        }
        Ok(Tensor {
            channels,
            dims,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    /// Voxels per channel.
    pub fn spatial(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.spatial();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.spatial();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, other: &Tensor<T>) -> bool {
        self.channels == other.channels && self.dims == other.dims
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor {
            channels: self.channels,
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        assert!(self.same_shape(other), "add_assign shape mismatch");
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, &b)| *a += b);
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            channels: self.channels,
            dims: self.dims,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.as_f64()))
                .collect(),
        }
    }
}

/// Stacks tensors along the channel axis in the given order.
pub fn concat_channels<T: Real>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts.first().ok_or(Error::EmptyInput("concat of zero tensors"))?;
    let dims = first.dims;
    let mut data = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    let mut channels = 0;
    for p in parts {
        if p.dims != dims {
            return Err(Error::ShapeMismatch(format!(
                "concat of {} and {}",
                dims, p.dims
            )));
        }
        channels += p.channels;
        data.extend_from_slice(&p.data);
    }
    Ok(Tensor {
        channels,
        dims,
        data,
    })
}

/// Inverse of [`concat_channels`] given the channel counts of each part.
pub fn split_channels<T: Real>(t: &Tensor<T>, sizes: &[usize]) -> Vec<Tensor<T>> {
    assert_eq!(sizes.iter().sum::<usize>(), t.channels, "split sizes");
    let n = t.spatial();
    let mut offset = 0;
    sizes
        .iter()
        .map(|&c| {
            let part = Tensor {
                channels: c,
                dims: t.dims,
                data: t.data[offset * n..(offset + c) * n].to_vec(),
            };
            offset += c;
            part
        })
        .collect()
}

/// Per-voxel softmax across channels.
pub fn softmax_channels<T: Real>(logits: &Tensor<T>) -> Tensor<T> {
    let c = logits.channels;
    let n = logits.spatial();
    let mut out = Tensor::zeros(c, logits.dims);
    let src = &logits.data;
    for v in 0..n {
        let mut max = T::neg_infinity();
        for k in 0..c {
            max = max.max(src[k * n + v]);
        }
        let mut sum = T::zero();
        for k in 0..c {
            let e = (src[k * n + v] - max).exp();
            out.data[k * n + v] = e;
            sum += e;
        }
        for k in 0..c {
            out.data[k * n + v] /= sum;
        }
    }
    out
}
