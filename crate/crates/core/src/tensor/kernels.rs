//! Slice-level kernels. Every forward kernel has matching backward kernels
//! used by the tape; the forward kernels are also used directly for eager
//! evaluation.

use crate::scalar::Scalar;

/// Dimensions of a same-padded dilated 1-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvDims {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub length: usize,
    pub dilation: usize,
}

impl ConvDims {
    /// Signed input offset of tap `k`.
    #[inline]
    fn offset(&self, k: usize) -> isize {
        (k as isize - (self.kernel / 2) as isize) * self.dilation as isize
    }

    /// Output range `[t0, t1)` for which tap `k` reads inside the input.
    #[inline]
    fn valid(&self, k: usize) -> (usize, usize, isize) {
        let off = self.offset(k);
        let l = self.length as isize;
        let t0 = (-off).clamp(0, l);
        let t1 = (l - off).clamp(0, l);
        if t1 <= t0 {
            // tap never lands inside the input
            return (0, 0, 0);
        }
        (t0 as usize, t1 as usize, off)
    }
}

/// `out[o, t] = b[o] + sum_{i,k} w[o, i, k] * x[i, t + (k - K/2) * d]` with
/// zero padding. Accumulation order per output sample is bias, then taps in
/// `(i, k)` lexicographic order.
pub fn conv1d<T: Scalar>(x: &[T], w: &[T], b: &[T], dims: ConvDims) -> Vec<T> {
    let ConvDims { in_channels, out_channels, kernel, length, .. } = dims;
    let mut out = vec![T::zero(); out_channels * length];
    for (o, row) in out.chunks_exact_mut(length).enumerate() {
        row.fill(b[o]);
        for i in 0..in_channels {
            let xin = &x[i * length..(i + 1) * length];
            let taps = &w[(o * in_channels + i) * kernel..(o * in_channels + i + 1) * kernel];
            for (k, &wv) in taps.iter().enumerate() {
                let (t0, t1, off) = dims.valid(k);
                let src = &xin[(t0 as isize + off) as usize..(t1 as isize + off) as usize];
                for (acc, &xv) in row[t0..t1].iter_mut().zip(src) {
                    *acc += wv * xv;
                }
            }
        }
    }
    out
}

pub fn conv1d_grad_input<T: Scalar>(dy: &[T], w: &[T], dims: ConvDims) -> Vec<T> {
    let ConvDims { in_channels, out_channels, kernel, length, .. } = dims;
    let mut dx = vec![T::zero(); in_channels * length];
    for (i, dxi) in dx.chunks_exact_mut(length).enumerate() {
        for o in 0..out_channels {
            let dyo = &dy[o * length..(o + 1) * length];
            for k in 0..kernel {
                let wv = w[(o * in_channels + i) * kernel + k];
                let (t0, t1, off) = dims.valid(k);
                let dst = &mut dxi[(t0 as isize + off) as usize..(t1 as isize + off) as usize];
                for (acc, &g) in dst.iter_mut().zip(&dyo[t0..t1]) {
                    *acc += wv * g;
                }
            }
        }
    }
    dx
}

pub fn conv1d_grad_weight<T: Scalar>(dy: &[T], x: &[T], dims: ConvDims) -> Vec<T> {
    let ConvDims { in_channels, out_channels, kernel, length, .. } = dims;
    let mut dw = vec![T::zero(); out_channels * in_channels * kernel];
    for o in 0..out_channels {
        let dyo = &dy[o * length..(o + 1) * length];
        for i in 0..in_channels {
            let xin = &x[i * length..(i + 1) * length];
            for k in 0..kernel {
                let (t0, t1, off) = dims.valid(k);
                let src = &xin[(t0 as isize + off) as usize..(t1 as isize + off) as usize];
                dw[(o * in_channels + i) * kernel + k] = dot(&dyo[t0..t1], src);
            }
        }
    }
    dw
}

pub fn conv1d_grad_bias<T: Scalar>(dy: &[T], out_channels: usize, length: usize) -> Vec<T> {
    (0..out_channels).map(|o| dy[o * length..(o + 1) * length].iter().copied().sum()).collect()
}

/// Fully-connected layer on a vector: `y = W x + b` with `W` of shape `[out, in]`.
pub fn linear<T: Scalar>(x: &[T], w: &[T], b: &[T]) -> Vec<T> {
    let n_in = x.len();
    b.iter().enumerate().map(|(o, &bo)| bo + dot(&w[o * n_in..(o + 1) * n_in], x)).collect()
}

pub fn linear_grad_input<T: Scalar>(dy: &[T], w: &[T], n_in: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); n_in];
    for (o, &g) in dy.iter().enumerate() {
        for (acc, &wv) in dx.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
            *acc += wv * g;
        }
    }
    dx
}

pub fn linear_grad_weight<T: Scalar>(dy: &[T], x: &[T]) -> Vec<T> {
    let mut dw = Vec::with_capacity(dy.len() * x.len());
    for &g in dy {
        dw.extend(x.iter().map(|&xv| g * xv));
    }
    dw
}

/// Interpolation weights for output sample `j` when upsampling by `ratio`:
/// source index `j / ratio` blended with its right neighbour by
/// `(j % ratio) / ratio`. Positions past the last source sample replicate it.
#[inline]
pub fn interp_taps<T: Scalar>(j: usize, ratio: usize, src_len: usize) -> (usize, usize, T) {
    let i0 = j / ratio;
    if i0 + 1 >= src_len {
        let last = src_len - 1;
        return (last, last, T::zero());
    }
    let frac = T::from_usize_lossy(j % ratio) / T::from_usize_lossy(ratio);
    (i0, i0 + 1, frac)
}

/// Linear interpolation of each channel of `x` (`channels * src_len`) to
/// `out_len` samples.
pub fn interp<T: Scalar>(x: &[T], channels: usize, src_len: usize, ratio: usize, out_len: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(channels * out_len);
    for c in 0..channels {
        let xs = &x[c * src_len..(c + 1) * src_len];
        out.extend((0..out_len).map(|j| {
            let (a, b, frac) = interp_taps::<T>(j, ratio, src_len);
            if frac == T::zero() {
                xs[a]
            } else {
                (T::one() - frac) * xs[a] + frac * xs[b]
            }
        }));
    }
    out
}

pub fn interp_grad<T: Scalar>(dy: &[T], channels: usize, src_len: usize, ratio: usize, out_len: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); channels * src_len];
    for c in 0..channels {
        let g = &dy[c * out_len..(c + 1) * out_len];
        let dxc = &mut dx[c * src_len..(c + 1) * src_len];
        for (j, &gj) in g.iter().enumerate() {
            let (a, b, frac) = interp_taps::<T>(j, ratio, src_len);
            dxc[a] += (T::one() - frac) * gj;
            if frac != T::zero() {
                dxc[b] += frac * gj;
            }
        }
    }
    dx
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
