//! The gradient tape: an append-only record of executed primitives.
//!
//! Nodes are appended in execution order, so the record is already
//! topologically sorted; `backward` walks it once in reverse and is then
//! spent. Parameters are deduplicated by identity when mounted, which is
//! what makes weight sharing work: mounting the same [`Param`] from two
//! branches yields one node whose gradient accumulates both paths.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::Arc;

use crate::scalar::Scalar;

use super::kernels::{self, Conv2dMeta};
use super::{shape_mismatch, Param, ParamId, Result, Tensor, TensorError};

enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// a*x + b with f64 coefficients (covers scalar-mul).
    Affine {
        x: usize,
        a: f64,
    },
    Matmul(usize, usize),
    Conv2d {
        x: usize,
        w: usize,
        bias: Option<usize>,
        meta: Conv2dMeta,
    },
    ConvT2d {
        x: usize,
        w: usize,
        bias: Option<usize>,
        meta: Conv2dMeta,
    },
    MaxPool2d {
        x: usize,
        argmax: Arc<Vec<usize>>,
    },
    Upsample2d {
        x: usize,
        factor: usize,
    },
    Relu(usize),
    LeakyRelu {
        x: usize,
        slope: f64,
    },
    Sigmoid(usize),
    Tanh(usize),
    Abs(usize),
    Sum(usize),
    Mean(usize),
    Reshape(usize),
    Concat {
        xs: Vec<usize>,
        dim: usize,
    },
    Slice {
        x: usize,
        dim: usize,
        start: usize,
    },
    Broadcast(usize),
    Permute {
        x: usize,
        axes: Vec<usize>,
    },
    Embedding {
        table: usize,
        indices: Arc<Vec<usize>>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op,
    needs_grad: bool,
}

struct TapeInner<T> {
    nodes: Vec<Node<T>>,
    param_nodes: HashMap<ParamId, usize>,
    consumed: bool,
}

/// Shared handle to the recording; clones are cheap.
pub struct Tape<T: Scalar> {
    inner: Rc<RefCell<TapeInner<T>>>,
}

impl<T: Scalar> Clone for Tape<T> {
    fn clone(&self) -> Self {
        Self {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// A tensor tracked on a tape.
pub struct Var<T: Scalar> {
    tape: Tape<T>,
    idx: usize,
}

impl<T: Scalar> Clone for Var<T> {
    fn clone(&self) -> Self {
        Self {
            tape: self.tape.clone(),
            idx: self.idx,
        }
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            inner: Rc::new(RefCell::new(TapeInner {
                nodes: Vec::new(),
                param_nodes: HashMap::new(),
                consumed: false,
            })),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor<T>, op: Op, needs_grad: bool) -> Var<T> {
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var {
            tape: self.clone(),
            idx: inner.nodes.len() - 1,
        }
    }

    /// Untracked leaf: participates in forward math, receives no gradient.
    pub fn input(&self, value: Tensor<T>) -> Var<T> {
        self.push(value, Op::Leaf, false)
    }

    /// Mount a parameter as a tracked leaf; repeated mounts return the same node.
    pub fn param(&self, p: &Param<T>) -> Var<T> {
        if let Some(&idx) = self.inner.borrow().param_nodes.get(&p.id()) {
            return Var {
                tape: self.clone(),
                idx,
            };
        }
        let var = self.push(p.value.clone(), Op::Leaf, true);
        self.inner.borrow_mut().param_nodes.insert(p.id(), var.idx);
        var
    }

    /// Reverse pass from a scalar loss. Gradients of multiply-used nodes
    /// accumulate by summation; the tape is spent afterwards.
    pub fn backward(&self, loss: &Var<T>) -> Result<Gradients<T>> {
        let mut inner = self.inner.borrow_mut();
        if inner.consumed {
            return Err(TensorError::TapeConsumed);
        }
        inner.consumed = true;
        let loss_shape = inner.nodes[loss.idx].value.shape().to_vec();
        if loss_shape.iter().product::<usize>() != 1 {
            return Err(TensorError::NonScalarLoss { shape: loss_shape });
        }

        let n = inner.nodes.len();
        let mut grads: Vec<Option<Tensor<T>>> = (0..n).map(|_| None).collect();
        grads[loss.idx] = Some(Tensor::full(loss_shape, T::one()));

        for idx in (0..=loss.idx).rev() {
            // Clones are cheap (shared buffer); keeping the slot filled lets
            // callers read gradients of intermediate nodes afterwards.
            let Some(grad) = grads[idx].clone() else {
                continue;
            };
            let node = &inner.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let nodes = &inner.nodes;
            let send = |grads: &mut Vec<Option<Tensor<T>>>, to: usize, g: Tensor<T>| {
                if !nodes[to].needs_grad {
                    return;
                }
                match &mut grads[to] {
                    Some(acc) => kernels::add_into(acc, &g),
                    slot @ None => *slot = Some(g),
                }
            };
            match &node.op {
                Op::Leaf => continue,
                Op::Add(a, b) => {
                    send(&mut grads, *a, grad.clone());
                    send(&mut grads, *b, grad);
                }
                Op::Sub(a, b) => {
                    send(&mut grads, *a, grad.clone());
                    send(&mut grads, *b, grad.map(|v| -v));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&inner.nodes[*a].value, &inner.nodes[*b].value);
                    send(&mut grads, *a, grad.zip_map(bv, "mul-bwd", |g, x| g * x)?);
                    send(&mut grads, *b, grad.zip_map(av, "mul-bwd", |g, x| g * x)?);
                }
                Op::Affine { x, a } => {
                    let a = T::cast(*a);
                    send(&mut grads, *x, grad.map(|g| g * a));
                }
                Op::Matmul(a, b) => {
                    let (av, bv) = (&inner.nodes[*a].value, &inner.nodes[*b].value);
                    let da = kernels::matmul(&grad, &kernels::transpose2d(bv))?;
                    let db = kernels::matmul(&kernels::transpose2d(av), &grad)?;
                    send(&mut grads, *a, da);
                    send(&mut grads, *b, db);
                }
                Op::Conv2d { x, w, bias, meta } => {
                    let (xv, wv) = (&inner.nodes[*x].value, &inner.nodes[*w].value);
                    let dx = kernels::conv2d_bwd_input(&grad, wv, xv.shape(), *meta);
                    let dw = kernels::conv2d_bwd_weight(&grad, xv, wv.shape(), *meta);
                    send(&mut grads, *x, dx);
                    send(&mut grads, *w, dw);
                    if let Some(b) = bias {
                        send(&mut grads, *b, kernels::conv2d_bwd_bias(&grad));
                    }
                }
                Op::ConvT2d { x, w, bias, meta } => {
                    let (xv, wv) = (&inner.nodes[*x].value, &inner.nodes[*w].value);
                    let dx = kernels::convt2d_bwd_input(&grad, wv, *meta)?;
                    let dw = kernels::convt2d_bwd_weight(&grad, xv, wv.shape(), *meta);
                    send(&mut grads, *x, dx);
                    send(&mut grads, *w, dw);
                    if let Some(b) = bias {
                        send(&mut grads, *b, kernels::conv2d_bwd_bias(&grad));
                    }
                }
                Op::MaxPool2d { x, argmax } => {
                    let shape = inner.nodes[*x].value.shape().to_vec();
                    send(&mut grads, *x, kernels::maxpool2d_bwd(&grad, argmax, &shape));
                }
                Op::Upsample2d { x, factor } => {
                    let shape = inner.nodes[*x].value.shape().to_vec();
                    send(&mut grads, *x, kernels::upsample2d_bwd(&grad, *factor, &shape));
                }
                Op::Relu(x) => {
                    let xv = &inner.nodes[*x].value;
                    send(
                        &mut grads,
                        *x,
                        grad.zip_map(xv, "relu-bwd", |g, v| if v > T::zero() { g } else { T::zero() })?,
                    );
                }
                Op::LeakyRelu { x, slope } => {
                    let xv = &inner.nodes[*x].value;
                    let s = T::cast(*slope);
                    send(
                        &mut grads,
                        *x,
                        grad.zip_map(xv, "leaky-relu-bwd", |g, v| if v > T::zero() { g } else { g * s })?,
                    );
                }
                Op::Sigmoid(x) => {
                    let yv = &node.value;
                    send(
                        &mut grads,
                        *x,
                        grad.zip_map(yv, "sigmoid-bwd", |g, y| g * y * (T::one() - y))?,
                    );
                }
                Op::Tanh(x) => {
                    let yv = &node.value;
                    send(
                        &mut grads,
                        *x,
                        grad.zip_map(yv, "tanh-bwd", |g, y| g * (T::one() - y * y))?,
                    );
                }
                Op::Abs(x) => {
                    let xv = &inner.nodes[*x].value;
                    send(
                        &mut grads,
                        *x,
                        grad.zip_map(xv, "abs-bwd", |g, v| {
                            if v > T::zero() {
                                g
                            } else if v < T::zero() {
                                -g
                            } else {
                                T::zero()
                            }
                        })?,
                    );
                }
                Op::Sum(x) => {
                    let shape = inner.nodes[*x].value.shape().to_vec();
                    let g = grad.item();
                    send(&mut grads, *x, Tensor::full(shape, g));
                }
                Op::Mean(x) => {
                    let shape = inner.nodes[*x].value.shape().to_vec();
                    let n = shape.iter().product::<usize>();
                    let g = grad.item() / T::cast(n as f64);
                    send(&mut grads, *x, Tensor::full(shape, g));
                }
                Op::Reshape(x) => {
                    let shape = inner.nodes[*x].value.shape().to_vec();
                    send(&mut grads, *x, grad.reshaped(shape)?);
                }
                Op::Concat { xs, dim } => {
                    let mut start = 0usize;
                    for &part in xs {
                        let len = inner.nodes[part].value.shape()[*dim];
                        send(&mut grads, part, kernels::slice(&grad, *dim, start, len)?);
                        start += len;
                    }
                }
                Op::Slice { x, dim, start } => {
                    let shape = inner.nodes[*x].value.shape().to_vec();
                    send(&mut grads, *x, kernels::slice_bwd(&grad, &shape, *dim, *start));
                }
                Op::Broadcast(x) => {
                    let shape = inner.nodes[*x].value.shape().to_vec();
                    send(&mut grads, *x, kernels::reduce_to(&grad, &shape));
                }
                Op::Permute { x, axes } => {
                    send(
                        &mut grads,
                        *x,
                        kernels::permute(&grad, &kernels::inverse_axes(axes))?,
                    );
                }
                Op::Embedding { table, indices } => {
                    let tv = &inner.nodes[*table].value;
                    let dim = tv.shape()[1];
                    let mut dt = Tensor::zeros(tv.shape().to_vec());
                    let dst = dt.data_mut();
                    for (row, &k) in indices.iter().enumerate() {
                        let g = &grad.data()[row * dim..(row + 1) * dim];
                        let d = &mut dst[k * dim..(k + 1) * dim];
                        for (o, &v) in d.iter_mut().zip(g) {
                            *o = *o + v;
                        }
                    }
                    send(&mut grads, *table, dt);
                }
            }
        }

        Ok(Gradients {
            node_grads: grads,
            param_nodes: inner.param_nodes.clone(),
        })
    }
}

/// Result of a backward pass.
pub struct Gradients<T: Scalar> {
    node_grads: Vec<Option<Tensor<T>>>,
    param_nodes: HashMap<ParamId, usize>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient w.r.t. a tracked variable, if it participated in the loss.
    pub fn wrt(&self, var: &Var<T>) -> Option<&Tensor<T>> {
        self.node_grads.get(var.idx).and_then(|g| g.as_ref())
    }

    /// Gradient for a parameter; zero if it did not participate.
    pub fn for_param(&self, p: &Param<T>) -> Tensor<T> {
        self.param_nodes
            .get(&p.id())
            .and_then(|&idx| self.node_grads[idx].clone())
            .unwrap_or_else(|| Tensor::zeros(p.value.shape().to_vec()))
    }
}

impl<T: Scalar> Var<T> {
    pub fn value(&self) -> Tensor<T> {
        self.tape.inner.borrow().nodes[self.idx].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.inner.borrow().nodes[self.idx].value.shape().to_vec()
    }

    pub fn tape(&self) -> &Tape<T> {
        &self.tape
    }

    fn needs_grad(&self) -> bool {
        self.tape.inner.borrow().nodes[self.idx].needs_grad
    }

    fn same_tape(&self, other: &Var<T>) -> Result<()> {
        if Rc::ptr_eq(&self.tape.inner, &other.tape.inner) {
            Ok(())
        } else {
            Err(TensorError::TapeMismatch)
        }
    }

    fn unary(&self, value: Tensor<T>, op: Op) -> Var<T> {
        self.tape.push(value, op, self.needs_grad())
    }

    fn binary(&self, other: &Var<T>, value: Tensor<T>, op: Op) -> Var<T> {
        self.tape
            .push(value, op, self.needs_grad() || other.needs_grad())
    }

    pub fn add(&self, other: &Var<T>) -> Result<Var<T>> {
        self.same_tape(other)?;
        let v = self.value().zip_map(&other.value(), "add", |a, b| a + b)?;
        Ok(self.binary(other, v, Op::Add(self.idx, other.idx)))
    }

    pub fn sub(&self, other: &Var<T>) -> Result<Var<T>> {
        self.same_tape(other)?;
        let v = self.value().zip_map(&other.value(), "sub", |a, b| a - b)?;
        Ok(self.binary(other, v, Op::Sub(self.idx, other.idx)))
    }

    pub fn mul(&self, other: &Var<T>) -> Result<Var<T>> {
        self.same_tape(other)?;
        let v = self.value().zip_map(&other.value(), "mul", |a, b| a * b)?;
        Ok(self.binary(other, v, Op::Mul(self.idx, other.idx)))
    }

    /// Multiply by a plain scalar.
    pub fn scale(&self, a: f64) -> Var<T> {
        let av = T::cast(a);
        let v = self.value().map(|x| x * av);
        self.unary(v, Op::Affine { x: self.idx, a })
    }

    /// `a*x + b` elementwise with plain scalars.
    pub fn affine(&self, a: f64, b: f64) -> Var<T> {
        let (av, bv) = (T::cast(a), T::cast(b));
        let v = self.value().map(|x| av * x + bv);
        self.unary(v, Op::Affine { x: self.idx, a })
    }

    pub fn matmul(&self, other: &Var<T>) -> Result<Var<T>> {
        self.same_tape(other)?;
        let v = kernels::matmul(&self.value(), &other.value())?;
        Ok(self.binary(other, v, Op::Matmul(self.idx, other.idx)))
    }

    pub fn conv2d(
        &self,
        weight: &Var<T>,
        bias: Option<&Var<T>>,
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> Result<Var<T>> {
        self.same_tape(weight)?;
        if let Some(b) = bias {
            self.same_tape(b)?;
        }
        let meta = Conv2dMeta { stride, pad };
        let v = kernels::conv2d_fwd(&self.value(), &weight.value(), bias.map(|b| b.value()).as_ref(), meta)?;
        let needs = self.needs_grad()
            || weight.needs_grad()
            || bias.map(|b| b.needs_grad()).unwrap_or(false);
        Ok(self.tape.push(
            v,
            Op::Conv2d {
                x: self.idx,
                w: weight.idx,
                bias: bias.map(|b| b.idx),
                meta,
            },
            needs,
        ))
    }

    pub fn conv2d_transposed(
        &self,
        weight: &Var<T>,
        bias: Option<&Var<T>>,
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> Result<Var<T>> {
        self.same_tape(weight)?;
        if let Some(b) = bias {
            self.same_tape(b)?;
        }
        let meta = Conv2dMeta { stride, pad };
        let v = kernels::convt2d_fwd(&self.value(), &weight.value(), bias.map(|b| b.value()).as_ref(), meta)?;
        let needs = self.needs_grad()
            || weight.needs_grad()
            || bias.map(|b| b.needs_grad()).unwrap_or(false);
        Ok(self.tape.push(
            v,
            Op::ConvT2d {
                x: self.idx,
                w: weight.idx,
                bias: bias.map(|b| b.idx),
                meta,
            },
            needs,
        ))
    }

    pub fn maxpool2d(&self, k: (usize, usize), stride: (usize, usize)) -> Result<Var<T>> {
        let (v, argmax) = kernels::maxpool2d_fwd(&self.value(), k, stride)?;
        Ok(self.unary(
            v,
            Op::MaxPool2d {
                x: self.idx,
                argmax: Arc::new(argmax),
            },
        ))
    }

    pub fn upsample_nearest2d(&self, factor: usize) -> Result<Var<T>> {
        let v = kernels::upsample2d_fwd(&self.value(), factor)?;
        Ok(self.unary(
            v,
            Op::Upsample2d {
                x: self.idx,
                factor,
            },
        ))
    }

    pub fn relu(&self) -> Var<T> {
        let v = self.value().map(|x| x.max(T::zero()));
        self.unary(v, Op::Relu(self.idx))
    }

    pub fn leaky_relu(&self, slope: f64) -> Var<T> {
        let s = T::cast(slope);
        let v = self.value().map(|x| if x > T::zero() { x } else { x * s });
        self.unary(
            v,
            Op::LeakyRelu {
                x: self.idx,
                slope,
            },
        )
    }

    pub fn sigmoid(&self) -> Var<T> {
        let v = self
            .value()
            .map(|x| T::one() / (T::one() + (-x).exp()));
        self.unary(v, Op::Sigmoid(self.idx))
    }

    pub fn tanh(&self) -> Var<T> {
        let v = self.value().map(|x| x.tanh());
        self.unary(v, Op::Tanh(self.idx))
    }

    pub fn abs(&self) -> Var<T> {
        let v = self.value().map(|x| x.abs());
        self.unary(v, Op::Abs(self.idx))
    }

    /// Sum of all elements (f64 accumulation) as a `[1]` tensor.
    pub fn sum(&self) -> Var<T> {
        let v = Tensor::scalar(T::cast(self.value().sum_f64()));
        self.unary(v, Op::Sum(self.idx))
    }

    /// Mean of all elements (f64 accumulation) as a `[1]` tensor.
    pub fn mean(&self) -> Var<T> {
        let v = Tensor::scalar(T::cast(self.value().mean_f64()));
        self.unary(v, Op::Mean(self.idx))
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Var<T>> {
        let v = self.value().reshaped(shape)?;
        Ok(self.unary(v, Op::Reshape(self.idx)))
    }

    pub fn concat(parts: &[&Var<T>], dim: usize) -> Result<Var<T>> {
        let first = parts
            .first()
            .ok_or_else(|| shape_mismatch("concat", "no inputs".into()))?;
        for p in &parts[1..] {
            first.same_tape(p)?;
        }
        let values: Vec<Tensor<T>> = parts.iter().map(|p| p.value()).collect();
        let refs: Vec<&Tensor<T>> = values.iter().collect();
        let v = kernels::concat(&refs, dim)?;
        let needs = parts.iter().any(|p| p.needs_grad());
        Ok(first.tape.push(
            v,
            Op::Concat {
                xs: parts.iter().map(|p| p.idx).collect(),
                dim,
            },
            needs,
        ))
    }

    pub fn slice(&self, dim: usize, start: usize, len: usize) -> Result<Var<T>> {
        let v = kernels::slice(&self.value(), dim, start, len)?;
        Ok(self.unary(
            v,
            Op::Slice {
                x: self.idx,
                dim,
                start,
            },
        ))
    }

    pub fn broadcast(&self, shape: &[usize]) -> Result<Var<T>> {
        let v = kernels::broadcast_to(&self.value(), shape)?;
        Ok(self.unary(v, Op::Broadcast(self.idx)))
    }

    pub fn permute(&self, axes: &[usize]) -> Result<Var<T>> {
        let v = kernels::permute(&self.value(), axes)?;
        Ok(self.unary(
            v,
            Op::Permute {
                x: self.idx,
                axes: axes.to_vec(),
            },
        ))
    }

    /// Row lookup `table[indices[i], :]`; gradient scatter-adds into the table.
    pub fn embedding(table: &Var<T>, indices: Arc<Vec<usize>>) -> Result<Var<T>> {
        let tv = table.value();
        if tv.shape().len() != 2 {
            return Err(shape_mismatch(
                "embedding",
                format!("table must be 2-d, got {:?}", tv.shape()),
            ));
        }
        let (k, dim) = (tv.shape()[0], tv.shape()[1]);
        if let Some(&bad) = indices.iter().find(|&&i| i >= k) {
            return Err(shape_mismatch(
                "embedding",
                format!("index {} out of range for table of {} rows", bad, k),
            ));
        }
        let mut out = Tensor::zeros([indices.len(), dim]);
        let dst = out.data_mut();
        for (row, &i) in indices.iter().enumerate() {
            dst[row * dim..(row + 1) * dim].copy_from_slice(&tv.data()[i * dim..(i + 1) * dim]);
        }
        Ok(table.tape.push(
            out,
            Op::Embedding {
                table: table.idx,
                indices,
            },
            table.needs_grad(),
        ))
    }

    /// Cut the gradient: same value, fresh untracked leaf.
    pub fn detach(&self) -> Var<T> {
        self.tape.input(self.value())
    }

    pub fn square(&self) -> Result<Var<T>> {
        self.mul(self)
    }

    /// Mean absolute error against `target`.
    pub fn l1_loss(&self, target: &Var<T>) -> Result<Var<T>> {
        Ok(self.sub(target)?.abs().mean())
    }

    /// Mean squared error against `target`.
    pub fn mse_loss(&self, target: &Var<T>) -> Result<Var<T>> {
        self.sub(target)?.square().map(|d| d.mean())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let tape = Tape::<f64>::new();
        let p = Param::new("x", Tensor::from_f64([2, 3], &[1., 2., 3., 4., 5., 6.]).unwrap());
        let x = tape.param(&p);
        let loss = x.sum();
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.for_param(&p).data(), &[1.0; 6]);
    }

    #[test]
    fn mean_of_squares_gradient() {
        // loss = mean(x^2), x = (1, 2) -> grad = 2x/n = (1, 2)
        let tape = Tape::<f64>::new();
        let p = Param::new("x", Tensor::from_f64([2], &[1., 2.]).unwrap());
        let x = tape.param(&p);
        let loss = x.square().unwrap().mean();
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.for_param(&p).data(), &[1.0, 2.0]);
    }

    #[test]
    fn backward_consumes_tape_once() {
        let tape = Tape::<f32>::new();
        let p = Param::new("x", Tensor::scalar(2.0f32));
        let x = tape.param(&p);
        let loss = x.mean();
        let loss2 = loss.clone();
        tape.backward(&loss).unwrap();
        assert!(matches!(
            tape.backward(&loss2),
            Err(TensorError::TapeConsumed)
        ));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let tape = Tape::<f32>::new();
        let x = tape.input(Tensor::ones([2, 2]));
        assert!(matches!(
            tape.backward(&x),
            Err(TensorError::NonScalarLoss { .. })
        ));
    }

    #[test]
    fn gradients_accumulate_across_uses() {
        // loss = sum(x*x) uses x twice: grad = 2x
        let tape = Tape::<f64>::new();
        let p = Param::new("x", Tensor::from_f64([3], &[1., -2., 3.]).unwrap());
        let x = tape.param(&p);
        let loss = x.mul(&x).unwrap().sum();
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.for_param(&p).data(), &[2., -4., 6.]);
    }

    #[test]
    fn non_participating_param_gets_zero_gradient() {
        let tape = Tape::<f32>::new();
        let used = Param::new("used", Tensor::scalar(1.0f32));
        let unused = Param::new("unused", Tensor::ones([4]));
        let x = tape.param(&used);
        let _ = tape.param(&unused);
        let loss = x.mean();
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.for_param(&unused).data(), &[0.0; 4]);
        assert_eq!(grads.for_param(&used).data(), &[1.0]);
    }

    #[test]
    fn param_mounted_twice_is_one_node() {
        let tape = Tape::<f64>::new();
        let p = Param::new("w", Tensor::from_f64([2], &[3., 5.]).unwrap());
        let a = tape.param(&p);
        let b = tape.param(&p);
        assert_eq!(a.idx, b.idx);
        // two branches reading the same parameter: grads sum
        let loss = a.sum().add(&b.scale(2.0).sum()).unwrap();
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.for_param(&p).data(), &[3.0, 3.0]);
    }

    #[test]
    fn detach_blocks_gradient() {
        let tape = Tape::<f64>::new();
        let p = Param::new("x", Tensor::from_f64([2], &[1., 2.]).unwrap());
        let x = tape.param(&p);
        let loss = x.detach().square().unwrap().mean();
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.for_param(&p).data(), &[0., 0.]);
    }

    #[test]
    fn linearity_of_backward() {
        // grad of (a*L1 + b*L2) == a*grad(L1) + b*grad(L2)
        let value = Tensor::from_f64([4], &[0.5, -1.5, 2.0, 0.25]).unwrap();
        let run = |wa: f64, wb: f64| -> Vec<f64> {
            let tape = Tape::<f64>::new();
            let p = Param::new("x", value.clone());
            let x = tape.param(&p);
            let l1 = x.square().unwrap().mean();
            let l2 = x.abs().sum();
            let loss = l1.scale(wa).add(&l2.scale(wb)).unwrap();
            let grads = tape.backward(&loss).unwrap();
            grads.for_param(&p).data().to_vec()
        };
        let g1 = run(1.0, 0.0);
        let g2 = run(0.0, 1.0);
        let combined = run(2.0, 3.0);
        for i in 0..4 {
            assert!((combined[i] - (2.0 * g1[i] + 3.0 * g2[i])).abs() < 1e-5);
        }
    }
}
