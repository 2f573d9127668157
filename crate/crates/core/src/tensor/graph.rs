//! Dynamically recorded tape. Every operation evaluates eagerly and appends a
//! node holding its value and the indices of its inputs; [`Graph::backward`]
//! walks the nodes in reverse and accumulates adjoints.

use std::sync::atomic::{AtomicU64, Ordering};

use super::backend::{eval, Backend};
use super::kernels;
use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

static NEXT_GRAPH_ID: AtomicU64 = AtomicU64::new(0);

/// Handle to a node on a particular [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    graph: u64,
    index: usize,
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Conv1d { x: usize, w: usize, b: usize, dilation: usize },
    Linear { x: usize, w: usize, b: usize },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    ChannelBias { x: usize, bias: usize },
    Narrow { x: usize, start: usize },
    Tanh(usize),
    Sigmoid(usize),
    Silu(usize),
    Abs(usize),
    Log(usize),
    ClampMin(usize, T),
    Sum(usize),
    Mean(usize),
    Interp { x: usize, ratio: usize },
    Reshape(usize),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

#[derive(Debug)]
pub struct Graph<T> {
    id: u64,
    nodes: Vec<Node<T>>,
}

/// Adjoints produced by one backward pass.
#[derive(Debug)]
pub struct Gradients<T> {
    graph: u64,
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `v`; exactly zero if `v` does not reach the loss.
    pub fn get(&self, v: Var) -> Result<Tensor<T>> {
        if v.graph != self.graph || v.index >= self.grads.len() {
            return Err(Error::ForeignVariable);
        }
        Ok(match &self.grads[v.index] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.index]),
        })
    }
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed), nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn idx(&self, v: &Var) -> Result<usize> {
        if v.graph == self.id && v.index < self.nodes.len() {
            Ok(v.index)
        } else {
            Err(Error::ForeignVariable)
        }
    }

    fn node(&self, v: &Var) -> Result<&Tensor<T>> {
        Ok(&self.nodes[self.idx(v)?].value)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[usize]) -> Var {
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.push_node(value, op, requires_grad)
    }

    fn push_node(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var { graph: self.id, index: self.nodes.len() - 1 }
    }

    fn unary(&mut self, a: &Var, op: impl Fn(usize) -> Op<T>, f: impl Fn(T) -> T) -> Result<Var> {
        let i = self.idx(a)?;
        let value = self.nodes[i].value.map(f);
        Ok(self.push(value, op(i), &[i]))
    }

    fn binary(
        &mut self,
        a: &Var,
        b: &Var,
        name: &str,
        op: fn(usize, usize) -> Op<T>,
        f: impl Fn(T, T) -> T,
    ) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let value = eval::zip(&self.nodes[ia].value, &self.nodes[ib].value, name, f)?;
        Ok(self.push(value, op(ia, ib), &[ia, ib]))
    }

    /// Gradients of the scalar `loss` with respect to every differentiable node.
    pub fn backward(&self, loss: &Var) -> Result<Gradients<T>> {
        let root = self.idx(loss)?;
        let loss_value = &self.nodes[root].value;
        if !loss_value.is_scalar() {
            return Err(Error::NotScalar(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[root] = Some(Tensor::full(loss_value.shape(), T::one()));

        for i in (0..=root).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }

        Ok(Gradients { graph: self.id, grads, shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect() })
    }

    /// `d loss / d p` for each of `params`, zero for parameters off the loss path.
    pub fn grad(&self, loss: &Var, params: &[Var]) -> Result<Vec<Tensor<T>>> {
        let grads = self.backward(loss)?;
        params.iter().map(|&p| grads.get(p)).collect()
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let y = &self.nodes[i].value;
        let val = |j: usize| &self.nodes[j].value;
        let wants = |j: usize| self.nodes[j].requires_grad;
        let mut acc = |j: usize, data: Vec<T>| {
            accumulate(&mut grads[j], val(j).shape(), data);
        };
        let pointwise = |j: usize, f: &dyn Fn(T, T, T) -> T| -> Vec<T> {
            g.data().iter().zip(val(j).data()).zip(y.data()).map(|((&gv, &xv), &yv)| f(gv, xv, yv)).collect()
        };

        match self.nodes[i].op {
            Op::Leaf => {}
            Op::Conv1d { x, w, b, dilation } => {
                let dims = eval::conv_dims(val(x), val(w), val(b), dilation)?;
                if wants(x) {
                    acc(x, kernels::conv1d_grad_input(g.data(), val(w).data(), dims));
                }
                if wants(w) {
                    acc(w, kernels::conv1d_grad_weight(g.data(), val(x).data(), dims));
                }
                if wants(b) {
                    acc(b, kernels::conv1d_grad_bias(g.data(), dims.out_channels, dims.length));
                }
            }
            Op::Linear { x, w, b } => {
                if wants(x) {
                    acc(x, kernels::linear_grad_input(g.data(), val(w).data(), val(x).numel()));
                }
                if wants(w) {
                    acc(w, kernels::linear_grad_weight(g.data(), val(x).data()));
                }
                if wants(b) {
                    acc(b, g.data().to_vec());
                }
            }
            Op::Add(a, b) => {
                if wants(a) {
                    acc(a, g.data().to_vec());
                }
                if wants(b) {
                    acc(b, g.data().to_vec());
                }
            }
            Op::Sub(a, b) => {
                if wants(a) {
                    acc(a, g.data().to_vec());
                }
                if wants(b) {
                    acc(b, g.data().iter().map(|&v| -v).collect());
                }
            }
            Op::Mul(a, b) => {
                if wants(a) {
                    acc(a, g.data().iter().zip(val(b).data()).map(|(&gv, &bv)| gv * bv).collect());
                }
                if wants(b) {
                    acc(b, g.data().iter().zip(val(a).data()).map(|(&gv, &av)| gv * av).collect());
                }
            }
            Op::Scale(a, c) => acc(a, g.data().iter().map(|&v| v * c).collect()),
            Op::ChannelBias { x, bias } => {
                if wants(x) {
                    acc(x, g.data().to_vec());
                }
                if wants(bias) {
                    let (_, l) = g.as_channels("channel bias grad")?;
                    acc(bias, g.data().chunks_exact(l).map(|row| row.iter().copied().sum()).collect());
                }
            }
            Op::Narrow { x, start } => {
                let (_, l) = val(x).as_channels("narrow grad")?;
                let mut data = vec![T::zero(); val(x).numel()];
                data[start * l..start * l + g.numel()].copy_from_slice(g.data());
                acc(x, data);
            }
            Op::Tanh(a) => acc(a, pointwise(a, &|gv, _, yv| gv * (T::one() - yv * yv))),
            Op::Sigmoid(a) => acc(a, pointwise(a, &|gv, _, yv| gv * yv * (T::one() - yv))),
            Op::Silu(a) => acc(
                a,
                pointwise(a, &|gv, xv, _| {
                    let s = kernels::sigmoid(xv);
                    gv * s * (T::one() + xv * (T::one() - s))
                }),
            ),
            Op::Abs(a) => acc(
                a,
                pointwise(a, &|gv, xv, _| {
                    if xv > T::zero() {
                        gv
                    } else if xv < T::zero() {
                        -gv
                    } else {
                        T::zero()
                    }
                }),
            ),
            Op::Log(a) => acc(a, pointwise(a, &|gv, xv, _| gv / xv)),
            Op::ClampMin(a, floor) => acc(a, pointwise(a, &|gv, xv, _| if xv > floor { gv } else { T::zero() })),
            Op::Sum(a) => acc(a, vec![g.data()[0]; val(a).numel()]),
            Op::Mean(a) => {
                let n = val(a).numel();
                acc(a, vec![g.data()[0] / T::from_usize_lossy(n); n])
            }
            Op::Interp { x, ratio } => {
                let (c, src) = val(x).as_channels("interp grad")?;
                let (_, out) = g.as_channels("interp grad")?;
                acc(x, kernels::interp_grad(g.data(), c, src, ratio, out));
            }
            Op::Reshape(a) => acc(a, g.data().to_vec()),
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, shape: &[usize], data: Vec<T>) {
    match slot {
        Some(existing) => {
            for (e, d) in existing.data_mut().iter_mut().zip(data) {
                *e += d;
            }
        }
        None => *slot = Some(Tensor::new(shape.to_vec(), data).expect("gradient shape")),
    }
}

impl<T: Scalar> Backend<T> for Graph<T> {
    type Value = Var;

    fn input(&mut self, t: Tensor<T>) -> Var {
        self.push_node(t, Op::Leaf, false)
    }

    fn param(&mut self, t: &Tensor<T>) -> Var {
        self.push_node(t.clone(), Op::Leaf, true)
    }

    /// Panics if `v` belongs to another graph.
    fn value<'a>(&'a self, v: &'a Var) -> &'a Tensor<T> {
        self.node(v).expect("variable from another graph")
    }

    fn conv1d(&mut self, x: &Var, w: &Var, b: &Var, dilation: usize) -> Result<Var> {
        let (ix, iw, ib) = (self.idx(x)?, self.idx(w)?, self.idx(b)?);
        let value = eval::conv1d(&self.nodes[ix].value, &self.nodes[iw].value, &self.nodes[ib].value, dilation)?;
        Ok(self.push(value, Op::Conv1d { x: ix, w: iw, b: ib, dilation }, &[ix, iw, ib]))
    }

    fn linear(&mut self, x: &Var, w: &Var, b: &Var) -> Result<Var> {
        let (ix, iw, ib) = (self.idx(x)?, self.idx(w)?, self.idx(b)?);
        let value = eval::linear(&self.nodes[ix].value, &self.nodes[iw].value, &self.nodes[ib].value)?;
        Ok(self.push(value, Op::Linear { x: ix, w: iw, b: ib }, &[ix, iw, ib]))
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.binary(a, b, "add", Op::Add, |x, y| x + y)
    }

    fn sub(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.binary(a, b, "sub", Op::Sub, |x, y| x - y)
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.binary(a, b, "mul", Op::Mul, |x, y| x * y)
    }

    fn scale(&mut self, a: &Var, c: T) -> Result<Var> {
        self.unary(a, |i| Op::Scale(i, c), |v| v * c)
    }

    fn add_channel_bias(&mut self, x: &Var, bias: &Var) -> Result<Var> {
        let (ix, ib) = (self.idx(x)?, self.idx(bias)?);
        let value = eval::add_channel_bias(&self.nodes[ix].value, &self.nodes[ib].value)?;
        Ok(self.push(value, Op::ChannelBias { x: ix, bias: ib }, &[ix, ib]))
    }

    fn narrow(&mut self, x: &Var, start: usize, len: usize) -> Result<Var> {
        let ix = self.idx(x)?;
        let value = eval::narrow(&self.nodes[ix].value, start, len)?;
        Ok(self.push(value, Op::Narrow { x: ix, start }, &[ix]))
    }

    fn tanh(&mut self, a: &Var) -> Result<Var> {
        self.unary(a, Op::Tanh, T::tanh)
    }

    fn sigmoid(&mut self, a: &Var) -> Result<Var> {
        self.unary(a, Op::Sigmoid, kernels::sigmoid)
    }

    fn silu(&mut self, a: &Var) -> Result<Var> {
        self.unary(a, Op::Silu, eval::silu)
    }

    fn abs(&mut self, a: &Var) -> Result<Var> {
        self.unary(a, Op::Abs, num_traits::Float::abs)
    }

    fn log(&mut self, a: &Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let value = eval::log(&self.nodes[ia].value)?;
        Ok(self.push(value, Op::Log(ia), &[ia]))
    }

    fn clamp_min(&mut self, a: &Var, floor: T) -> Result<Var> {
        self.unary(a, |i| Op::ClampMin(i, floor), |v| v.max(floor))
    }

    fn sum(&mut self, a: &Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let value = Tensor::scalar(self.nodes[ia].value.data().iter().copied().sum());
        Ok(self.push(value, Op::Sum(ia), &[ia]))
    }

    fn mean(&mut self, a: &Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let value = eval::mean(&self.nodes[ia].value);
        Ok(self.push(value, Op::Mean(ia), &[ia]))
    }

    fn interp(&mut self, x: &Var, ratio: usize, out_len: usize) -> Result<Var> {
        let ix = self.idx(x)?;
        let value = eval::interp(&self.nodes[ix].value, ratio, out_len)?;
        Ok(self.push(value, Op::Interp { x: ix, ratio }, &[ix]))
    }

    fn reshape(&mut self, x: &Var, shape: Vec<usize>) -> Result<Var> {
        let ix = self.idx(x)?;
        let value = Tensor::new(shape, self.nodes[ix].value.data().to_vec())?;
        Ok(self.push(value, Op::Reshape(ix), &[ix]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares() {
        let mut g = Graph::<f64>::new();
        let x = g.param(&Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap());
        let sq = g.mul(&x, &x).unwrap();
        let loss = g.sum(&sq).unwrap();
        let dx = g.grad(&loss, &[x]).unwrap();
        assert_eq!(dx[0].data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn disconnected_parameter_gets_zero() {
        let mut g = Graph::<f64>::new();
        let x = g.param(&Tensor::vector(vec![1.0, 2.0]).unwrap());
        let unused = g.param(&Tensor::vector(vec![5.0, 6.0, 7.0]).unwrap());
        let loss = g.sum(&x).unwrap();
        let grads = g.grad(&loss, &[x, unused]).unwrap();
        assert_eq!(grads[1].data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.param(&Tensor::vector(vec![1.0, 2.0]).unwrap());
        assert!(matches!(g.backward(&x), Err(Error::NotScalar(_))));
    }

    #[test]
    fn foreign_variable_is_rejected() {
        let mut g1 = Graph::<f64>::new();
        let mut g2 = Graph::<f64>::new();
        let x = g1.param(&Tensor::scalar(1.0));
        assert!(matches!(g2.tanh(&x), Err(Error::ForeignVariable)));
    }

    #[test]
    fn reused_node_accumulates() {
        // loss = sum(x * x + x) -> 2x + 1
        let mut g = Graph::<f64>::new();
        let x = g.param(&Tensor::vector(vec![0.5, -1.0]).unwrap());
        let sq = g.mul(&x, &x).unwrap();
        let y = g.add(&sq, &x).unwrap();
        let loss = g.sum(&y).unwrap();
        let dx = g.grad(&loss, &[x]).unwrap();
        assert_eq!(dx[0].data(), &[2.0, -1.0]);
    }
}
