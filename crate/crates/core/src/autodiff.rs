//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation in execution order together with its
//! output value. [`Graph::backward`] walks the record in reverse, so any
//! composite of the recorded operations is differentiable. A graph is
//! single-use: a second `backward` is an error rather than accumulating.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{shape_err, Error, Result};
use crate::kernels::{self, Mode};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

static NEXT_GRAPH_ID: AtomicUsize = AtomicUsize::new(1);

/// Handle to a value recorded on a specific [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    graph: usize,
    index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    Conv2d,
    BatchNorm,
    Relu,
    Softmax,
    AvgPool,
    Upsample,
    Concat,
    Add,
    Sub,
    Mul,
    Div,
    Log,
    PowScalar,
    Scale,
    AddScalar,
    SumAll,
    SumChannels,
    Clamp,
}

impl OpKind {
    pub const ALL: [OpKind; 19] = [
        OpKind::Leaf,
        OpKind::Conv2d,
        OpKind::BatchNorm,
        OpKind::Relu,
        OpKind::Softmax,
        OpKind::AvgPool,
        OpKind::Upsample,
        OpKind::Concat,
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Div,
        OpKind::Log,
        OpKind::PowScalar,
        OpKind::Scale,
        OpKind::AddScalar,
        OpKind::SumAll,
        OpKind::SumChannels,
        OpKind::Clamp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::Conv2d => "conv2d",
            OpKind::BatchNorm => "batch_norm2d",
            OpKind::Relu => "relu",
            OpKind::Softmax => "softmax_channels",
            OpKind::AvgPool => "avg_pool2d",
            OpKind::Upsample => "upsample_nearest2x",
            OpKind::Concat => "concat_channels",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::Log => "log",
            OpKind::PowScalar => "pow_scalar",
            OpKind::Scale => "scale",
            OpKind::AddScalar => "add_scalar",
            OpKind::SumAll => "sum_all",
            OpKind::SumChannels => "sum_channels",
            OpKind::Clamp => "clamp",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.name() == name)
    }
}

enum Op<T> {
    Leaf,
    Conv2d {
        input: usize,
        weight: usize,
        bias: Option<usize>,
        stride: usize,
        padding: usize,
    },
    BatchNorm {
        input: usize,
        gamma: usize,
        beta: usize,
        normalized: Tensor<T>,
        inv_std: Vec<T>,
        mode: Mode,
    },
    Relu(usize),
    Softmax(usize),
    AvgPool(usize),
    Upsample(usize),
    Concat(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Log(usize),
    PowScalar(usize, T),
    Scale(usize, T),
    AddScalar(usize, T),
    SumAll(usize),
    SumChannels(usize),
    Clamp(usize, T, T),
}

impl<T> Op<T> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::BatchNorm { .. } => OpKind::BatchNorm,
            Op::Relu(_) => OpKind::Relu,
            Op::Softmax(_) => OpKind::Softmax,
            Op::AvgPool(_) => OpKind::AvgPool,
            Op::Upsample(_) => OpKind::Upsample,
            Op::Concat(..) => OpKind::Concat,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Div(..) => OpKind::Div,
            Op::Log(_) => OpKind::Log,
            Op::PowScalar(..) => OpKind::PowScalar,
            Op::Scale(..) => OpKind::Scale,
            Op::AddScalar(..) => OpKind::AddScalar,
            Op::SumAll(_) => OpKind::SumAll,
            Op::SumChannels(_) => OpKind::SumChannels,
            Op::Clamp(..) => OpKind::Clamp,
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Batch-norm result: the output variable and, in train mode, the updated
/// running statistics the caller should store back.
pub struct BatchNormOutput<T> {
    pub output: Var,
    pub running_mean: Option<Tensor<T>>,
    pub running_var: Option<Tensor<T>>,
}

pub struct Graph<T> {
    id: usize,
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
    backward_done: bool,
    fault: Option<OpKind>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
            fault: None,
        }
    }

    /// Test hook: corrupts the backward rule of `kind` (gradients scaled by
    /// 1.5) so verification suites can prove they detect a bad rule.
    #[doc(hidden)]
    pub fn inject_backward_fault(&mut self, kind: Option<OpKind>) {
        self.fault = kind;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Operation kinds in execution order.
    pub fn tape(&self) -> impl Iterator<Item = OpKind> + '_ {
        self.nodes.iter().map(|n| n.op.kind())
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.graph != self.id || v.index >= self.nodes.len() {
            return Err(Error::ForeignVar);
        }
        Ok(v.index)
    }

    /// Value of `v`. Panics if `v` belongs to another graph.
    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[self.idx(v).expect("variable from another graph")].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.idx(v).map(|i| self.nodes[i].requires_grad).unwrap_or(false)
    }

    /// Gradient of the last `backward` loss with respect to `v`; `None` when
    /// `v` does not require grad or does not reach the loss.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        let i = self.idx(v).ok()?;
        self.grads.get(i)?.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        let i = self.idx(v).ok()?;
        self.grads.get_mut(i)?.take()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            graph: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn any_grad(&self, idx: &[usize]) -> bool {
        idx.iter().any(|&i| self.nodes[i].requires_grad)
    }

    fn unary(&mut self, x: Var, f: impl FnOnce(&Tensor<T>) -> Result<Tensor<T>>, op: impl FnOnce(usize) -> Op<T>) -> Result<Var> {
        let i = self.idx(x)?;
        let value = f(&self.nodes[i].value)?;
        let rg = self.nodes[i].requires_grad;
        Ok(self.push(value, op(i), rg))
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(T, T) -> T,
        op: impl FnOnce(usize, usize) -> Op<T>,
    ) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        va.check_same_shape(vb, name)?;
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::from_parts(va.shape().to_vec(), data);
        let rg = self.any_grad(&[ia, ib]);
        Ok(self.push(value, op(ia, ib), rg))
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (ii, iw) = (self.idx(input)?, self.idx(weight)?);
        let ib = bias.map(|b| self.idx(b)).transpose()?;
        let value = kernels::conv2d(
            &self.nodes[ii].value,
            &self.nodes[iw].value,
            ib.map(|b| &self.nodes[b].value),
            stride,
            padding,
        )?;
        let mut deps = vec![ii, iw];
        deps.extend(ib);
        let rg = self.any_grad(&deps);
        Ok(self.push(
            value,
            Op::Conv2d {
                input: ii,
                weight: iw,
                bias: ib,
                stride,
                padding,
            },
            rg,
        ))
    }

    /// Batch normalisation over N×H×W per channel. Running statistics are
    /// plain buffers: read in eval mode, returned updated in train mode.
    pub fn batch_norm2d(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        running_mean: &Tensor<T>,
        running_var: &Tensor<T>,
        mode: Mode,
    ) -> Result<BatchNormOutput<T>> {
        let (ii, ig, ib) = (self.idx(input)?, self.idx(gamma)?, self.idx(beta)?);
        let fwd = kernels::batch_norm2d(
            &self.nodes[ii].value,
            &self.nodes[ig].value,
            &self.nodes[ib].value,
            running_mean,
            running_var,
            mode,
        )?;
        let (running_mean, running_var) = match fwd.batch_stats {
            Some((mean, var)) => {
                let m = T::lit(kernels::BN_MOMENTUM);
                let one_m = T::one() - m;
                let blend = |old: &Tensor<T>, new: &[T]| {
                    let data = old.data().iter().zip(new).map(|(&o, &b)| m * o + one_m * b).collect();
                    Tensor::from_parts(old.shape().to_vec(), data)
                };
                (Some(blend(running_mean, &mean)), Some(blend(running_var, &var)))
            }
            None => (None, None),
        };
        let rg = self.any_grad(&[ii, ig, ib]);
        let output = self.push(
            fwd.output,
            Op::BatchNorm {
                input: ii,
                gamma: ig,
                beta: ib,
                normalized: fwd.normalized,
                inv_std: fwd.inv_std,
                mode,
            },
            rg,
        );
        Ok(BatchNormOutput {
            output,
            running_mean,
            running_var,
        })
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, |t| Ok(kernels::relu(t)), Op::Relu)
    }

    pub fn softmax_channels(&mut self, x: Var) -> Result<Var> {
        self.unary(x, kernels::softmax_channels, Op::Softmax)
    }

    pub fn avg_pool2d(&mut self, x: Var) -> Result<Var> {
        self.unary(x, kernels::avg_pool2d, Op::AvgPool)
    }

    pub fn upsample_nearest2x(&mut self, x: Var) -> Result<Var> {
        self.unary(x, kernels::upsample_nearest2x, Op::Upsample)
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let value = kernels::concat_channels(&self.nodes[ia].value, &self.nodes[ib].value)?;
        let rg = self.any_grad(&[ia, ib]);
        Ok(self.push(value, Op::Concat(ia, ib), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "div", |x, y| x / y, Op::Div)
    }

    /// Natural log. Inputs must already be positive; loss code clamps first.
    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.unary(
            x,
            |t| {
                if let Some((index, v)) = t.data().iter().enumerate().find(|(_, v)| **v <= T::zero()) {
                    return Err(Error::Domain {
                        index,
                        value: v.as_f64(),
                    });
                }
                Ok(t.map(|v| v.ln()))
            },
            Op::Log,
        )
    }

    pub fn pow_scalar(&mut self, x: Var, exponent: T) -> Result<Var> {
        self.unary(x, |t| Ok(t.map(|v| v.powf(exponent))), |i| Op::PowScalar(i, exponent))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Result<Var> {
        self.unary(x, |t| Ok(t.map(|v| v * factor)), |i| Op::Scale(i, factor))
    }

    pub fn add_scalar(&mut self, x: Var, offset: T) -> Result<Var> {
        self.unary(x, |t| Ok(t.map(|v| v + offset)), |i| Op::AddScalar(i, offset))
    }

    /// `1 - x`, a common building block in the losses.
    pub fn one_minus(&mut self, x: Var) -> Result<Var> {
        let neg = self.scale(x, -T::one())?;
        self.add_scalar(neg, T::one())
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        self.unary(x, |t| Ok(Tensor::scalar(t.data().iter().copied().sum())), Op::SumAll)
    }

    pub fn sum_channels(&mut self, x: Var) -> Result<Var> {
        self.unary(x, kernels::sum_channels, Op::SumChannels)
    }

    pub fn clamp(&mut self, x: Var, lo: T, hi: T) -> Result<Var> {
        if lo > hi {
            return Err(shape_err("clamp", format!("empty range [{lo}, {hi}]")));
        }
        self.unary(x, |t| Ok(t.map(|v| v.max(lo).min(hi))), |i| Op::Clamp(i, lo, hi))
    }

    /// Populates gradients of `loss` on every reachable variable that
    /// requires grad.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let li = self.idx(loss)?;
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        let lv = &self.nodes[li].value;
        if lv.rank() != 0 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        self.backward_done = true;
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[li].requires_grad {
            return Ok(());
        }
        self.grads[li] = Some(Tensor::scalar(T::one()));
        for i in (0..=li).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = self.grads[i].take() else { continue };
            let mut contributions = self.local_grads(i, &g)?;
            if self.fault == Some(self.nodes[i].op.kind()) {
                let k = T::lit(1.5);
                for (_, t) in contributions.iter_mut() {
                    t.data_mut().iter_mut().for_each(|v| *v *= k);
                }
            }
            for (target, contrib) in contributions {
                if !self.nodes[target].requires_grad {
                    continue;
                }
                match &mut self.grads[target] {
                    Some(acc) => acc
                        .data_mut()
                        .iter_mut()
                        .zip(contrib.data())
                        .for_each(|(a, &c)| *a += c),
                    slot @ None => *slot = Some(contrib),
                }
            }
        }
        Ok(())
    }

    fn local_grads(&self, i: usize, g: &Tensor<T>) -> Result<Vec<(usize, Tensor<T>)>> {
        let node = &self.nodes[i];
        let val = |j: usize| &self.nodes[j].value;
        let needs = |j: usize| self.nodes[j].requires_grad;
        let zip = |a: &Tensor<T>, f: &dyn Fn(T, T) -> T| {
            let data = a.data().iter().zip(g.data()).map(|(&x, &d)| f(x, d)).collect();
            Tensor::from_parts(a.shape().to_vec(), data)
        };
        let out = match &node.op {
            Op::Leaf => Vec::new(),
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
            } => {
                let grads = kernels::conv2d_backward(
                    val(*input),
                    val(*weight),
                    *stride,
                    *padding,
                    g,
                    needs(*input),
                    needs(*weight),
                    bias.is_some_and(needs),
                )?;
                let mut out = Vec::new();
                out.extend(grads.input.map(|t| (*input, t)));
                out.extend(grads.weight.map(|t| (*weight, t)));
                if let (Some(b), Some(t)) = (bias, grads.bias) {
                    out.push((*b, t));
                }
                out
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                normalized,
                inv_std,
                mode,
            } => {
                let (dx, dg, db) =
                    kernels::batch_norm2d_backward(normalized, inv_std, val(*gamma), g, *mode);
                vec![(*input, dx), (*gamma, dg), (*beta, db)]
            }
            Op::Relu(x) => vec![(*x, zip(val(*x), &|x, d| if x > T::zero() { d } else { T::zero() }))],
            Op::Softmax(x) => vec![(*x, kernels::softmax_channels_backward(&node.value, g))],
            Op::AvgPool(x) => vec![(*x, kernels::avg_pool2d_backward(val(*x).shape(), g))],
            Op::Upsample(x) => vec![(*x, kernels::upsample_nearest2x_backward(g))],
            Op::Concat(a, b) => {
                let ca = val(*a).shape()[1];
                let cb = val(*b).shape()[1];
                vec![
                    (*a, g.slice_channels(0, ca)?),
                    (*b, g.slice_channels(ca, ca + cb)?),
                ]
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|d| -d))],
            Op::Mul(a, b) => vec![
                (*a, zip(val(*b), &|y, d| y * d)),
                (*b, zip(val(*a), &|x, d| x * d)),
            ],
            Op::Div(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let db = va
                    .data()
                    .iter()
                    .zip(vb.data())
                    .zip(g.data())
                    .map(|((&x, &y), &d)| -d * x / (y * y))
                    .collect();
                vec![
                    (*a, zip(vb, &|y, d| d / y)),
                    (*b, Tensor::from_parts(vb.shape().to_vec(), db)),
                ]
            }
            Op::Log(x) => vec![(*x, zip(val(*x), &|x, d| d / x))],
            Op::PowScalar(x, p) => {
                let p = *p;
                vec![(*x, zip(val(*x), &|x, d| d * p * x.powf(p - T::one())))]
            }
            Op::Scale(x, k) => vec![(*x, g.map(|d| d * *k))],
            Op::AddScalar(x, _) => vec![(*x, g.clone())],
            Op::SumAll(x) => {
                let d = g.item();
                vec![(*x, Tensor::full(val(*x).shape(), d))]
            }
            Op::SumChannels(x) => {
                let xv = val(*x);
                let [n, c, h, w] = xv.dims4("sum_channels")?;
                let hw = h * w;
                let mut data = vec![T::zero(); xv.numel()];
                for b in 0..n {
                    for ch in 0..c {
                        let off = (b * c + ch) * hw;
                        data[off..off + hw].fill(g.data()[ch]);
                    }
                }
                vec![(*x, Tensor::from_parts(xv.shape().to_vec(), data))]
            }
            Op::Clamp(x, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                vec![(
                    *x,
                    zip(val(*x), &|x, d| if x >= lo && x <= hi { d } else { T::zero() }),
                )]
            }
        };
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_f64(&[1], &[3.0]).unwrap(), true);
        let y = g.mul(x, x).unwrap();
        let loss = g.sum_all(y).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn relu_dead_zone() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_f64(&[1], &[-2.0]).unwrap(), true);
        let y = g.relu(x).unwrap();
        let loss = g.sum_all(y).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[0.0]);
    }

    #[test]
    fn relu_values() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::from_f64(&[3], &[-1.0, 0.0, 2.0]).unwrap());
        let y = g.relu(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn elementwise_values() {
        let mut g = Graph::<f64>::new();
        let one = g.constant(Tensor::from_f64(&[1], &[1.0]).unwrap());
        let l = g.log(one).unwrap();
        assert_eq!(g.value(l).data(), &[0.0]);
        let two = g.constant(Tensor::from_f64(&[1], &[2.0]).unwrap());
        let p = g.pow_scalar(two, 2.0).unwrap();
        assert_eq!(g.value(p).data(), &[4.0]);
        let m = g.constant(Tensor::from_f64(&[2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap());
        let s = g.sum_all(m).unwrap();
        assert_eq!(g.value(s).rank(), 0);
        assert_eq!(g.value(s).item(), 10.0);
        let c = g.clamp(m, 1.5, 3.5).unwrap();
        assert_eq!(g.value(c).data(), &[1.5, 2.0, 3.0, 3.5]);
    }

    #[test]
    fn log_domain_error() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_f64(&[2], &[1.0, 0.0]).unwrap());
        assert!(matches!(g.log(x), Err(Error::Domain { index: 1, .. })));
    }

    #[test]
    fn binary_shape_mismatch() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(&[2]));
        let b = g.constant(Tensor::zeros(&[3]));
        assert!(matches!(g.add(a, b), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn backward_errors() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_f64(&[2], &[1.0, 2.0]).unwrap(), true);
        let y = g.mul(x, x).unwrap();
        assert!(matches!(g.backward(y), Err(Error::NonScalarLoss(_))));
        let loss = g.sum_all(y).unwrap();
        g.backward(loss).unwrap();
        assert!(matches!(g.backward(loss), Err(Error::BackwardTwice)));

        let mut other = Graph::<f64>::new();
        let z = other.leaf(Tensor::scalar(1.0), true);
        let mut g2 = Graph::<f64>::new();
        assert!(matches!(g2.backward(z), Err(Error::ForeignVar)));
    }

    #[test]
    fn unreachable_and_frozen_have_no_grad() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::scalar(2.0), true);
        let unused = g.leaf(Tensor::scalar(5.0), true);
        let frozen = g.leaf(Tensor::scalar(3.0), false);
        let y = g.mul(x, frozen).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().item(), 3.0);
        assert!(g.grad(unused).is_none());
        assert!(g.grad(frozen).is_none());
    }

    #[test]
    fn shared_input_accumulates_within_one_pass() {
        // loss = x*x + 3x  -> 2x + 3
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::scalar(4.0), true);
        let sq = g.mul(x, x).unwrap();
        let lin = g.scale(x, 3.0).unwrap();
        let loss = g.add(sq, lin).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().item(), 11.0);
    }

    #[test]
    fn tape_is_execution_order() {
        let mut g = Graph::<f32>::new();
        let x = g.leaf(Tensor::zeros(&[1, 1, 2, 2]), true);
        let r = g.relu(x).unwrap();
        let p = g.avg_pool2d(r).unwrap();
        let _ = g.sum_all(p).unwrap();
        let kinds: Vec<_> = g.tape().collect();
        assert_eq!(kinds, [OpKind::Leaf, OpKind::Relu, OpKind::AvgPool, OpKind::SumAll]);
    }

    #[test]
    fn fault_hook_changes_gradient() {
        let mut g = Graph::<f64>::new();
        g.inject_backward_fault(Some(OpKind::Mul));
        let x = g.leaf(Tensor::scalar(3.0), true);
        let y = g.mul(x, x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().item(), 9.0);
    }
}
