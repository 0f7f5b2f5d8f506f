//! 3D convolution (im2col + gemm over depth slabs) and 2×2×2 transposed convolution.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Real, Tensor};
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::volume::Dims3;

/// Target number of output voxels per im2col slab.
const SLAB_VOXELS: usize = 4096;

fn he_normal<T: Real, R: Rng + ?Sized>(rng: &mut R, n: usize, fan_in: usize) -> Vec<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            T::from_f64_lossy(z * std)
        })
        .collect()
}

/// Cubic-kernel 3D convolution with zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// `[out][in][kz][ky][kx]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv3d<T> {
    pub fn zeros(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        Conv3d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: vec![T::zero(); out_channels * in_channels * kernel.pow(3)],
            bias: vec![T::zero(); out_channels],
        }
    }

    /// He-normal (fan-in) weights, zero bias.
    pub fn init<R: Rng + ?Sized>(
        rng: &mut R,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        let mut c = Self::zeros(in_channels, out_channels, kernel, stride, padding);
        let fan_in = in_channels * kernel.pow(3);
        c.weight = he_normal(rng, c.weight.len(), fan_in);
        c
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel.pow(3)
    }

    pub fn output_dims(&self, d: Dims3) -> Result<Dims3> {
        let axis = |n: usize| {
            let padded = n + 2 * self.padding;
            if padded < self.kernel {
                Err(Error::ShapeMismatch(format!(
                    "input extent {n} smaller than kernel {}",
                    self.kernel
                )))
            } else {
                Ok((padded - self.kernel) / self.stride + 1)
            }
        };
        Ok(Dims3::new(axis(d.depth)?, axis(d.height)?, axis(d.width)?))
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<Dims3> {
        if x.channels() != self.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "conv expects {} input channels, got {}",
                self.in_channels,
                x.channels()
            )));
        }
        self.output_dims(x.dims())
    }

    fn slabs(&self, out: Dims3) -> Vec<(usize, usize)> {
        let plane = out.height * out.width;
        let per = (SLAB_VOXELS / plane.max(1)).max(1);
        (0..out.depth)
            .step_by(per)
            .map(|z0| (z0, (z0 + per).min(out.depth)))
            .collect()
    }

    /// Valid output index range along one axis for kernel offset `k`.
    #[inline]
    fn valid_range(&self, k: usize, in_len: usize, out_len: usize) -> (usize, usize) {
        let (s, p) = (self.stride as isize, self.padding as isize);
        let k = k as isize;
        // need 0 <= o*s + k - p < in_len
        let lo = ((p - k).max(0) + s - 1) / s;
        let hi_incl = (in_len as isize - 1 + p - k).div_euclid(s);
        let hi = (hi_incl + 1).clamp(0, out_len as isize);
        (lo.min(hi) as usize, hi as usize)
    }

    /// Unfolds the receptive fields of output planes `z0..z1` into a K×N matrix.
    fn im2col(&self, x: &Tensor<T>, out: Dims3, (z0, z1): (usize, usize)) -> Vec<T> {
        let k = self.kernel;
        let inp = x.dims();
        let plane = out.height * out.width;
        let n = (z1 - z0) * plane;
        let mut col = vec![T::zero(); self.patch_len() * n];
        let (s, p) = (self.stride, self.padding);
        for ic in 0..self.in_channels {
            let xin = x.channel(ic);
            for kz in 0..k {
                for ky in 0..k {
                    let (ylo, yhi) = self.valid_range(ky, inp.height, out.height);
                    for kx in 0..k {
                        let row = ((ic * k + kz) * k + ky) * k + kx;
                        let dst = &mut col[row * n..(row + 1) * n];
                        let (xlo, xhi) = self.valid_range(kx, inp.width, out.width);
                        for oz in z0..z1 {
                            let iz = (oz * s + kz) as isize - p as isize;
                            if iz < 0 || iz >= inp.depth as isize {
                                continue;
                            }
                            let zbase = (oz - z0) * plane;
                            for oy in ylo..yhi {
                                let iy = oy * s + ky - p;
                                let src = (iz as usize * inp.height + iy) * inp.width;
                                let d = &mut dst[zbase + oy * out.width..][..out.width];
                                if s == 1 {
                                    let ix0 = xlo + kx - p;
                                    d[xlo..xhi].copy_from_slice(&xin[src + ix0..src + ix0 + (xhi - xlo)]);
                                } else {
                                    for ox in xlo..xhi {
                                        d[ox] = xin[src + ox * s + kx - p];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        col
    }

    /// Adjoint of [`im2col`](Self::im2col): scatter-adds columns into `dx`.
    fn col2im(&self, col: &[T], dx: &mut Tensor<T>, out: Dims3, (z0, z1): (usize, usize)) {
        let k = self.kernel;
        let inp = dx.dims();
        let plane = out.height * out.width;
        let n = (z1 - z0) * plane;
        let (s, p) = (self.stride, self.padding);
        for ic in 0..self.in_channels {
            let xin = dx.channel_mut(ic);
            for kz in 0..k {
                for ky in 0..k {
                    let (ylo, yhi) = self.valid_range(ky, inp.height, out.height);
                    for kx in 0..k {
                        let row = ((ic * k + kz) * k + ky) * k + kx;
                        let src_row = &col[row * n..(row + 1) * n];
                        let (xlo, xhi) = self.valid_range(kx, inp.width, out.width);
                        for oz in z0..z1 {
                            let iz = (oz * s + kz) as isize - p as isize;
                            if iz < 0 || iz >= inp.depth as isize {
                                continue;
                            }
                            let zbase = (oz - z0) * plane;
                            for oy in ylo..yhi {
                                let iy = oy * s + ky - p;
                                let dst = (iz as usize * inp.height + iy) * inp.width;
                                let c = &src_row[zbase + oy * out.width..][..out.width];
                                for ox in xlo..xhi {
                                    xin[dst + ox * s + kx - p] += c[ox];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_with(x, Exec::default())
    }

    pub fn forward_with(&self, x: &Tensor<T>, exec: Exec) -> Result<Tensor<T>> {
        let out = self.check_input(x)?;
        let slabs = self.slabs(out);
        let kdim = self.patch_len();
        let oc = self.out_channels;
        let plane = out.height * out.width;
        let parts = exec.map(slabs.len(), |si| {
            let slab = slabs[si];
            let n = (slab.1 - slab.0) * plane;
            let col = self.im2col(x, out, slab);
            let mut buf = vec![T::zero(); oc * n];
            T::gemm(
                oc,
                kdim,
                n,
                T::one(),
                &self.weight,
                (kdim, 1),
                &col,
                (n, 1),
                T::zero(),
                &mut buf,
                (n, 1),
            );
            buf
        });
        let mut y = Tensor::zeros(oc, out);
        let spatial = out.len();
        for (slab, buf) in slabs.iter().zip(&parts) {
            let n = (slab.1 - slab.0) * plane;
            for o in 0..oc {
                let b = self.bias[o];
                let dst = &mut y.data_mut()[o * spatial + slab.0 * plane..][..n];
                for (d, &v) in dst.iter_mut().zip(&buf[o * n..(o + 1) * n]) {
                    *d = v + b;
                }
            }
        }
        Ok(y)
    }

    /// Gradients for input (when `need_dx`), weight and bias.
    pub fn backward(
        &self,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        need_dx: bool,
        exec: Exec,
    ) -> Result<(Option<Tensor<T>>, Vec<T>, Vec<T>)> {
        let out = self.check_input(x)?;
        if dy.dims() != out || dy.channels() != self.out_channels {
            return Err(Error::ShapeMismatch(format!(
                "conv backward: gradient {}x{} vs output {}x{}",
                dy.channels(),
                dy.dims(),
                self.out_channels,
                out
            )));
        }
        let oc = self.out_channels;
        let kdim = self.patch_len();
        let plane = out.height * out.width;
        let spatial = out.len();

        let db: Vec<T> = (0..oc).map(|o| dy.channel(o).iter().copied().sum()).collect();
        let mut dw = vec![T::zero(); oc * kdim];
        let mut dx = need_dx.then(|| Tensor::zeros(self.in_channels, x.dims()));

        let slabs = self.slabs(out);
        for group in slabs.chunks(exec.width().max(1)) {
            let parts = exec.map(group.len(), |gi| {
                let slab = group[gi];
                let n = (slab.1 - slab.0) * plane;
                let col = self.im2col(x, out, slab);
                let dys = &dy.data()[slab.0 * plane..];
                let mut dw_part = vec![T::zero(); oc * kdim];
                T::gemm(
                    oc,
                    n,
                    kdim,
                    T::one(),
                    dys,
                    (spatial, 1),
                    &col,
                    (1, n),
                    T::zero(),
                    &mut dw_part,
                    (kdim, 1),
                );
                let dcol = need_dx.then(|| {
                    let mut dcol = vec![T::zero(); kdim * n];
                    T::gemm(
                        kdim,
                        oc,
                        n,
                        T::one(),
                        &self.weight,
                        (1, kdim),
                        dys,
                        (spatial, 1),
                        T::zero(),
                        &mut dcol,
                        (n, 1),
                    );
                    dcol
                });
                (dw_part, dcol)
            });
            for (slab, (dw_part, dcol)) in group.iter().zip(parts) {
                dw.iter_mut().zip(&dw_part).for_each(|(a, &b)| *a += b);
                if let (Some(dx), Some(dcol)) = (dx.as_mut(), dcol) {
                    self.col2im(&dcol, dx, out, *slab);
                }
            }
        }
        Ok((dx, dw, db))
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Transposed convolution with kernel 2 and stride 2 (exact 2× upsampling).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose3d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[in][out][2][2][2]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvTranspose3d<T> {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        ConvTranspose3d {
            in_channels,
            out_channels,
            weight: vec![T::zero(); in_channels * out_channels * 8],
            bias: vec![T::zero(); out_channels],
        }
    }

    pub fn init<R: Rng + ?Sized>(rng: &mut R, in_channels: usize, out_channels: usize) -> Self {
        let mut t = Self::zeros(in_channels, out_channels);
        // each output voxel receives exactly one tap from every input channel
        t.weight = he_normal(rng, t.weight.len(), in_channels);
        t
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.channels() != self.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "transposed conv expects {} channels, got {}",
                self.in_channels,
                x.channels()
            )));
        }
        let d = x.dims();
        let n = d.len();
        let rows = self.out_channels * 8;
        let mut taps = vec![T::zero(); rows * n];
        T::gemm(
            rows,
            self.in_channels,
            n,
            T::one(),
            &self.weight,
            (1, rows),
            x.data(),
            (n, 1),
            T::zero(),
            &mut taps,
            (n, 1),
        );
        let od = Dims3::new(2 * d.depth, 2 * d.height, 2 * d.width);
        let mut y = Tensor::zeros(self.out_channels, od);
        for o in 0..self.out_channels {
            let b = self.bias[o];
            let dst = y.channel_mut(o);
            for tap in 0..8 {
                let (a, bb, c) = (tap >> 2, (tap >> 1) & 1, tap & 1);
                let src = &taps[(o * 8 + tap) * n..][..n];
                for z in 0..d.depth {
                    for yy in 0..d.height {
                        let row = od.index(2 * z + a, 2 * yy + bb, 0);
                        let s = &src[d.index(z, yy, 0)..][..d.width];
                        for (x, &v) in s.iter().enumerate() {
                            dst[row + 2 * x + c] = v + b;
                        }
                    }
                }
            }
        }
        Ok(y)
    }

    pub fn backward(&self, x: &Tensor<T>, dy: &Tensor<T>) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
        let d = x.dims();
        let od = Dims3::new(2 * d.depth, 2 * d.height, 2 * d.width);
        if dy.dims() != od || dy.channels() != self.out_channels {
            return Err(Error::ShapeMismatch(format!(
                "transposed conv backward: gradient {}x{} vs {}x{}",
                dy.channels(),
                dy.dims(),
                self.out_channels,
                od
            )));
        }
        let n = d.len();
        let rows = self.out_channels * 8;
        let mut dtaps = vec![T::zero(); rows * n];
        for o in 0..self.out_channels {
            let src = dy.channel(o);
            for tap in 0..8 {
                let (a, bb, c) = (tap >> 2, (tap >> 1) & 1, tap & 1);
                let dst = &mut dtaps[(o * 8 + tap) * n..][..n];
                for z in 0..d.depth {
                    for yy in 0..d.height {
                        let row = od.index(2 * z + a, 2 * yy + bb, 0);
                        let dd = &mut dst[d.index(z, yy, 0)..][..d.width];
                        for (x, v) in dd.iter_mut().enumerate() {
                            *v = src[row + 2 * x + c];
                        }
                    }
                }
            }
        }
        let db: Vec<T> = (0..self.out_channels)
            .map(|o| dy.channel(o).iter().copied().sum())
            .collect();
        let mut dx = Tensor::zeros(self.in_channels, d);
        T::gemm(
            self.in_channels,
            rows,
            n,
            T::one(),
            &self.weight,
            (rows, 1),
            &dtaps,
            (n, 1),
            T::zero(),
            dx.data_mut(),
            (n, 1),
        );
        let mut dw = vec![T::zero(); self.weight.len()];
        T::gemm(
            self.in_channels,
            n,
            rows,
            T::one(),
            x.data(),
            (n, 1),
            &dtaps,
            (1, n),
            T::zero(),
            &mut dw,
            (rows, 1),
        );
        Ok((dx, dw, db))
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}
