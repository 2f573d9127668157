use std::rc::Rc;

use super::kernels::{self, ConvDims};
use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// The operation set the network is built from. [`Eager`] evaluates it
/// directly; [`super::Graph`] evaluates it while recording a tape for
/// reverse-mode differentiation.
pub trait Backend<T: Scalar> {
    type Value: Clone;

    /// Non-differentiable input.
    fn input(&mut self, t: Tensor<T>) -> Self::Value;
    /// Differentiable leaf.
    fn param(&mut self, t: &Tensor<T>) -> Self::Value;
    fn value<'a>(&'a self, v: &'a Self::Value) -> &'a Tensor<T>;

    fn conv1d(&mut self, x: &Self::Value, w: &Self::Value, b: &Self::Value, dilation: usize) -> Result<Self::Value>;
    fn linear(&mut self, x: &Self::Value, w: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn sub(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn mul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn scale(&mut self, a: &Self::Value, c: T) -> Result<Self::Value>;
    /// `x[c, t] + bias[c]`.
    fn add_channel_bias(&mut self, x: &Self::Value, bias: &Self::Value) -> Result<Self::Value>;
    /// Channels `start..start + len` of a `[C, L]` tensor.
    fn narrow(&mut self, x: &Self::Value, start: usize, len: usize) -> Result<Self::Value>;
    fn tanh(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn sigmoid(&mut self, a: &Self::Value) -> Result<Self::Value>;
    /// `x * sigmoid(x)`.
    fn silu(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn abs(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn log(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn clamp_min(&mut self, a: &Self::Value, floor: T) -> Result<Self::Value>;
    fn sum(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn mean(&mut self, a: &Self::Value) -> Result<Self::Value>;
    /// Linear interpolation along the last axis by an integer `ratio` to `out_len` samples.
    fn interp(&mut self, x: &Self::Value, ratio: usize, out_len: usize) -> Result<Self::Value>;
    fn reshape(&mut self, x: &Self::Value, shape: Vec<usize>) -> Result<Self::Value>;
}

// Shared forward evaluation with shape checking.
pub(crate) mod eval {
    use super::*;

    pub fn conv_dims<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, dilation: usize) -> Result<ConvDims> {
        let (c_in, length) = x.as_channels("conv1d input")?;
        let &[c_out, w_in, kernel] = w.shape() else {
            return Err(Error::Shape(format!("conv1d weight must be [C_out, C_in, K], got {:?}", w.shape())));
        };
        if w_in != c_in {
            return Err(Error::Shape(format!("conv1d: input has {c_in} channels, weight expects {w_in}")));
        }
        if b.shape() != [c_out] {
            return Err(Error::Shape(format!("conv1d bias must be [{c_out}], got {:?}", b.shape())));
        }
        if kernel % 2 == 0 {
            return Err(Error::InvalidArgument(format!("conv1d kernel size must be odd, got {kernel}")));
        }
        if dilation == 0 {
            return Err(Error::InvalidArgument("conv1d dilation must be >= 1".into()));
        }
        Ok(ConvDims { in_channels: c_in, out_channels: c_out, kernel, length, dilation })
    }

    pub fn conv1d<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, dilation: usize) -> Result<Tensor<T>> {
        let d = conv_dims(x, w, b, dilation)?;
        Tensor::new(vec![d.out_channels, d.length], kernels::conv1d(x.data(), w.data(), b.data(), d))
    }

    pub fn linear<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        let n_in = x.numel();
        match *w.shape() {
            [o, i] if i == n_in && b.shape() == [o] => {
                Tensor::new(vec![o], kernels::linear(x.data(), w.data(), b.data()))
            }
            _ => Err(Error::Shape(format!("linear: x {:?}, w {:?}, b {:?}", x.shape(), w.shape(), b.shape()))),
        }
    }

    pub fn zip<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, op: &str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        a.same_shape(b, op)?;
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(a.shape().to_vec(), data)
    }

    pub fn add_channel_bias<T: Scalar>(x: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
        let (c, l) = x.as_channels("add_channel_bias")?;
        if bias.numel() != c {
            return Err(Error::Shape(format!("channel bias has {} entries for {c} channels", bias.numel())));
        }
        let mut data = x.data().to_vec();
        for (row, &bv) in data.chunks_exact_mut(l).zip(bias.data()) {
            row.iter_mut().for_each(|v| *v += bv);
        }
        Tensor::new(x.shape().to_vec(), data)
    }

    pub fn narrow<T: Scalar>(x: &Tensor<T>, start: usize, len: usize) -> Result<Tensor<T>> {
        let (c, l) = x.as_channels("narrow")?;
        if len == 0 || start + len > c {
            return Err(Error::Shape(format!("narrow {start}..{} of {c} channels", start + len)));
        }
        Tensor::new(vec![len, l], x.data()[start * l..(start + len) * l].to_vec())
    }

    pub fn log<T: Scalar>(a: &Tensor<T>) -> Result<Tensor<T>> {
        if a.data().iter().any(|&v| v <= T::zero()) {
            return Err(Error::InvalidArgument("log of a non-positive value".into()));
        }
        Ok(a.map(T::ln))
    }

    pub fn interp<T: Scalar>(x: &Tensor<T>, ratio: usize, out_len: usize) -> Result<Tensor<T>> {
        let (c, l) = x.as_channels("interp")?;
        if ratio == 0 || out_len == 0 {
            return Err(Error::InvalidArgument("interp needs ratio >= 1 and out_len >= 1".into()));
        }
        let shape = if x.shape().len() == 1 { vec![out_len] } else { vec![c, out_len] };
        Tensor::new(shape, kernels::interp(x.data(), c, l, ratio, out_len))
    }

    pub fn silu<T: Scalar>(v: T) -> T {
        v * kernels::sigmoid(v)
    }

    pub fn mean<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
        Tensor::scalar(a.data().iter().copied().sum::<T>() / T::from_usize_lossy(a.numel()))
    }
}

/// Direct evaluation with no recording.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eager;

impl<T: Scalar> Backend<T> for Eager {
    type Value = Rc<Tensor<T>>;

    fn input(&mut self, t: Tensor<T>) -> Self::Value {
        Rc::new(t)
    }

    fn param(&mut self, t: &Tensor<T>) -> Self::Value {
        Rc::new(t.clone())
    }

    fn value<'a>(&'a self, v: &'a Self::Value) -> &'a Tensor<T> {
        v
    }

    fn conv1d(&mut self, x: &Self::Value, w: &Self::Value, b: &Self::Value, dilation: usize) -> Result<Self::Value> {
        eval::conv1d(x, w, b, dilation).map(Rc::new)
    }

    fn linear(&mut self, x: &Self::Value, w: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        eval::linear(x, w, b).map(Rc::new)
    }

    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        eval::zip(a, b, "add", |x, y| x + y).map(Rc::new)
    }

    fn sub(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        eval::zip(a, b, "sub", |x, y| x - y).map(Rc::new)
    }

    fn mul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        eval::zip(a, b, "mul", |x, y| x * y).map(Rc::new)
    }

    fn scale(&mut self, a: &Self::Value, c: T) -> Result<Self::Value> {
        Ok(Rc::new(a.map(|v| v * c)))
    }

    fn add_channel_bias(&mut self, x: &Self::Value, bias: &Self::Value) -> Result<Self::Value> {
        eval::add_channel_bias(x, bias).map(Rc::new)
    }

    fn narrow(&mut self, x: &Self::Value, start: usize, len: usize) -> Result<Self::Value> {
        eval::narrow(x, start, len).map(Rc::new)
    }

    fn tanh(&mut self, a: &Self::Value) -> Result<Self::Value> {
        Ok(Rc::new(a.map(T::tanh)))
    }

    fn sigmoid(&mut self, a: &Self::Value) -> Result<Self::Value> {
        Ok(Rc::new(a.map(kernels::sigmoid)))
    }

    fn silu(&mut self, a: &Self::Value) -> Result<Self::Value> {
        Ok(Rc::new(a.map(eval::silu)))
    }

    fn abs(&mut self, a: &Self::Value) -> Result<Self::Value> {
        Ok(Rc::new(a.map(num_traits::Float::abs)))
    }

    fn log(&mut self, a: &Self::Value) -> Result<Self::Value> {
        eval::log(a).map(Rc::new)
    }

    fn clamp_min(&mut self, a: &Self::Value, floor: T) -> Result<Self::Value> {
        Ok(Rc::new(a.map(|v| v.max(floor))))
    }

    fn sum(&mut self, a: &Self::Value) -> Result<Self::Value> {
        Ok(Rc::new(Tensor::scalar(a.data().iter().copied().sum())))
    }

    fn mean(&mut self, a: &Self::Value) -> Result<Self::Value> {
        Ok(Rc::new(eval::mean(a)))
    }

    fn interp(&mut self, x: &Self::Value, ratio: usize, out_len: usize) -> Result<Self::Value> {
        eval::interp(x, ratio, out_len).map(Rc::new)
    }

    fn reshape(&mut self, x: &Self::Value, shape: Vec<usize>) -> Result<Self::Value> {
        Tensor::new(shape, x.data().to_vec()).map(Rc::new)
    }
}
