use std::borrow::Cow;

use super::ops::{self, EmptySlice, NO_ARGMAX};
use super::{Mask, Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<S> {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, S),
    Gelu(Var),
    Sigmoid(Var),
    Reshape(Var),
    Transpose(Var),
    Conv1d { input: Var, kernel: Var, bias: Var },
    Conv2d { input: Var, kernel: Var, bias: Var },
    MaxPool { input: Var, argmax: Vec<usize> },
    Embedding { table: Var, ids: Vec<usize> },
    Dot(Var, Var),
    Sum(Var),
    Mean(Var),
    Stack(Vec<Var>),
    Cosine { a: Var, b: Var, cos: S },
    InfoNce { logits: Var, tau: S, probs: Vec<S> },
    Bce { scores: Var, labels: Vec<S> },
}

impl<S> Op<S> {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => Vec::new(),
            Op::Add(a, b) | Op::Mul(a, b) | Op::Dot(a, b) => vec![*a, *b],
            Op::Cosine { a, b, .. } => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Gelu(a)
            | Op::Sigmoid(a)
            | Op::Reshape(a)
            | Op::Transpose(a)
            | Op::Sum(a)
            | Op::Mean(a) => vec![*a],
            Op::Conv1d {
                input,
                kernel,
                bias,
            }
            | Op::Conv2d {
                input,
                kernel,
                bias,
            } => vec![*input, *kernel, *bias],
            Op::MaxPool { input, .. } => vec![*input],
            Op::Embedding { table, .. } => vec![*table],
            Op::Stack(vs) => vs.clone(),
            Op::InfoNce { logits, .. } => vec![*logits],
            Op::Bce { scores, .. } => vec![*scores],
        }
    }
}

struct Node<'a, S: Scalar> {
    value: Cow<'a, Tensor<S>>,
    op: Op<S>,
    needs_grad: bool,
}

/// Records executed operations so gradients can be accumulated in reverse.
///
/// Leaves may borrow their tensors (model parameters stay in place while any
/// number of tapes read them).
pub struct Tape<'a, S: Scalar = f32> {
    nodes: Vec<Node<'a, S>>,
}

impl<S: Scalar> Default for Tape<'_, S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, S: Scalar> Tape<'a, S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Borrowed leaf that receives a gradient.
    pub fn param(&mut self, value: &'a Tensor<S>) -> Var {
        self.push_leaf(Cow::Borrowed(value), true)
    }

    /// Owned leaf that receives a gradient.
    pub fn input(&mut self, value: Tensor<S>) -> Var {
        self.push_leaf(Cow::Owned(value), true)
    }

    /// Owned leaf excluded from differentiation.
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.push_leaf(Cow::Owned(value), false)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push_leaf(&mut self, value: Cow<'a, Tensor<S>>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>) -> Var {
        let inputs = op.inputs();
        debug_assert!(
            value.is_finite() || !inputs.iter().all(|&v| self.value(v).is_finite()),
            "non-finite output from finite inputs"
        );
        let needs_grad = inputs.iter().any(|&v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(format!("{what}: {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(S, S) -> S) -> Tensor<S> {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape(), data).expect("shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self.zip_with(a, b, |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self.zip_with(a, b, |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: S) -> Var {
        let out = self.value(a).map(|x| x * c);
        self.push(out, Op::Scale(a, c))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(ops::gelu);
        self.push(out, Op::Gelu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(ops::sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = ops::transpose2(self.value(a))?;
        Ok(self.push(out, Op::Transpose(a)))
    }

    pub fn conv1d_same(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var> {
        let out = ops::conv1d_same(self.value(input), self.value(kernel), self.value(bias))?;
        Ok(self.push(
            out,
            Op::Conv1d {
                input,
                kernel,
                bias,
            },
        ))
    }

    pub fn conv2d_same(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var> {
        let out = ops::conv2d_same(self.value(input), self.value(kernel), self.value(bias))?;
        Ok(self.push(
            out,
            Op::Conv2d {
                input,
                kernel,
                bias,
            },
        ))
    }

    /// Max over `axis`; a slice with no valid position is an error.
    pub fn maxpool(&mut self, input: Var, axis: usize, mask: Option<&Mask>) -> Result<Var> {
        self.maxpool_with(input, axis, mask, EmptySlice::Error)
    }

    pub fn maxpool_with(
        &mut self,
        input: Var,
        axis: usize,
        mask: Option<&Mask>,
        empty: EmptySlice,
    ) -> Result<Var> {
        let pool = ops::maxpool_with_argmax(self.value(input), axis, mask, empty)?;
        Ok(self.push(
            pool.output,
            Op::MaxPool {
                input,
                argmax: pool.argmax,
            },
        ))
    }

    pub fn embedding(&mut self, table: Var, ids: &[usize], shape: &[usize]) -> Result<Var> {
        let out = ops::embedding_lookup(self.value(table), ids, shape)?;
        Ok(self.push(
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Inner product of two equally shaped tensors, as a scalar.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "dot")?;
        let (ta, tb) = (self.value(a), self.value(b));
        let s = ta
            .data()
            .iter()
            .zip(tb.data())
            .fold(S::zero(), |acc, (&x, &y)| acc + x * y);
        Ok(self.push(Tensor::scalar(s), Op::Dot(a, b)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.sum() / S::from_f64(t.numel() as f64);
        self.push(Tensor::scalar(s), Op::Mean(a))
    }

    /// Stacks equally shaped values along a new leading axis; scalars stack
    /// into a vector.
    pub fn stack(&mut self, vars: &[Var]) -> Result<Var> {
        let first = *vars
            .first()
            .ok_or_else(|| Error::invalid("stack of zero tensors"))?;
        let inner = self.value(first).shape().to_vec();
        let mut data = Vec::with_capacity(vars.len() * self.value(first).numel());
        for &v in vars {
            let t = self.value(v);
            if t.shape() != inner {
                return Err(Error::shape(format!(
                    "stack: {:?} vs {:?}",
                    t.shape(),
                    inner
                )));
            }
            data.extend_from_slice(t.data());
        }
        let shape: Vec<usize> = if inner == [1] {
            vec![vars.len()]
        } else {
            std::iter::once(vars.len()).chain(inner).collect()
        };
        let out = Tensor::new(&shape, data)?;
        Ok(self.push(out, Op::Stack(vars.to_vec())))
    }

    /// Cosine similarity of two equally shaped tensors; zero norm is an error.
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "cosine")?;
        let (ta, tb) = (self.value(a), self.value(b));
        let cos = cosine_of(ta.data(), tb.data()).ok_or(Error::ZeroNorm)?;
        Ok(self.push(Tensor::scalar(cos), Op::Cosine { a, b, cos }))
    }

    /// `-log softmax(logits / tau)[0]`: index 0 holds the positive.
    pub fn info_nce(&mut self, logits: Var, tau: S) -> Result<Var> {
        if tau <= S::zero() {
            return Err(Error::invalid("temperature must be positive"));
        }
        let z: Vec<S> = self.value(logits).data().iter().map(|&x| x / tau).collect();
        let max = z.iter().fold(S::neg_infinity(), |m, &x| m.max(x));
        let exps: Vec<S> = z.iter().map(|&x| (x - max).exp()).collect();
        let total = exps.iter().fold(S::zero(), |acc, &e| acc + e);
        let probs: Vec<S> = exps.iter().map(|&e| e / total).collect();
        let loss = -(z[0] - max - total.ln());
        Ok(self.push(
            Tensor::scalar(loss),
            Op::InfoNce {
                logits,
                tau,
                probs,
            },
        ))
    }

    /// Mean binary cross-entropy of probabilities against 0/1 labels; scores
    /// are clamped to `[1e-7, 1 - 1e-7]`.
    pub fn bce(&mut self, scores: Var, labels: &[S]) -> Result<Var> {
        let s = self.value(scores);
        if s.numel() != labels.len() {
            return Err(Error::shape(format!(
                "bce: {} scores vs {} labels",
                s.numel(),
                labels.len()
            )));
        }
        let loss = bce_value(s.data(), labels);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Bce {
                scores,
                labels: labels.to_vec(),
            },
        ))
    }

    /// Reverse accumulation from a scalar output.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        if self.value(loss).numel() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.backward_from(loss, Tensor::full(self.value(loss).shape(), S::one()))
    }

    /// Vector-Jacobian product: accumulate gradients given `seed = dL/d(output)`.
    pub fn backward_from(&self, output: Var, seed: Tensor<S>) -> Result<Gradients<S>> {
        if seed.shape() != self.value(output).shape() {
            return Err(Error::shape(format!(
                "seed {:?} vs output {:?}",
                seed.shape(),
                self.value(output).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(seed);
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) || !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<S>>], v: Var, g: Tensor<S>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node<'a, S>, g: Tensor<S>, grads: &mut [Option<Tensor<S>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *b, g.clone());
                self.accumulate(grads, *a, g);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let ga = elementwise(&g, tb, |g, y| g * y);
                let gb = elementwise(&g, ta, |g, x| g * x);
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::Scale(a, c) => {
                let c = *c;
                self.accumulate(grads, *a, g.map(|x| x * c));
            }
            Op::Gelu(a) => {
                let ga = elementwise(&g, self.value(*a), |g, x| g * ops::gelu_grad(x));
                self.accumulate(grads, *a, ga);
            }
            Op::Sigmoid(a) => {
                let ga = elementwise(&g, &node.value, |g, s| g * s * (S::one() - s));
                self.accumulate(grads, *a, ga);
            }
            Op::Reshape(a) => {
                let shape = self.value(*a).shape().to_vec();
                self.accumulate(grads, *a, g.reshape(&shape).expect("reshape"));
            }
            Op::Transpose(a) => {
                self.accumulate(grads, *a, ops::transpose2(&g).expect("rank 2"));
            }
            Op::Conv1d {
                input,
                kernel,
                bias,
            } => {
                let cg = ops::conv1d_same_backward(self.value(*input), self.value(*kernel), &g);
                self.accumulate(grads, *input, cg.input);
                self.accumulate(grads, *kernel, cg.kernel);
                self.accumulate(grads, *bias, cg.bias);
            }
            Op::Conv2d {
                input,
                kernel,
                bias,
            } => {
                let cg = ops::conv2d_same_backward(self.value(*input), self.value(*kernel), &g);
                self.accumulate(grads, *input, cg.input);
                self.accumulate(grads, *kernel, cg.kernel);
                self.accumulate(grads, *bias, cg.bias);
            }
            Op::MaxPool { input, argmax } => {
                let mut gi = Tensor::zeros(self.value(*input).shape());
                let buf = gi.data_mut();
                for (&idx, &gv) in argmax.iter().zip(g.data()) {
                    if idx != NO_ARGMAX {
                        buf[idx] = buf[idx] + gv;
                    }
                }
                self.accumulate(grads, *input, gi);
            }
            Op::Embedding { table, ids } => {
                if !self.nodes[table.0].needs_grad {
                    return;
                }
                let mut gt = Tensor::zeros(self.value(*table).shape());
                let dim = gt.shape()[1];
                let buf = gt.data_mut();
                for (row, &id) in g.data().chunks_exact(dim).zip(ids) {
                    for (dst, &src) in buf[id * dim..(id + 1) * dim].iter_mut().zip(row) {
                        *dst = *dst + src;
                    }
                }
                self.accumulate(grads, *table, gt);
            }
            Op::Dot(a, b) => {
                let gv = g.item();
                let ga = self.value(*b).map(|y| y * gv);
                let gb = self.value(*a).map(|x| x * gv);
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::Sum(a) => {
                let t = Tensor::full(self.value(*a).shape(), g.item());
                self.accumulate(grads, *a, t);
            }
            Op::Mean(a) => {
                let ta = self.value(*a);
                let gv = g.item() / S::from_f64(ta.numel() as f64);
                self.accumulate(grads, *a, Tensor::full(ta.shape(), gv));
            }
            Op::Stack(vars) => {
                let chunk = g.numel() / vars.len();
                for (v, part) in vars.iter().zip(g.data().chunks_exact(chunk)) {
                    let shape = self.value(*v).shape().to_vec();
                    self.accumulate(grads, *v, Tensor::new(&shape, part.to_vec()).expect("shape"));
                }
            }
            Op::Cosine { a, b, cos } => {
                let gv = g.item();
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (na, nb) = (norm(ta.data()), norm(tb.data()));
                let ga = cosine_grad(ta, tb, na, nb, *cos, gv);
                let gb = cosine_grad(tb, ta, nb, na, *cos, gv);
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::InfoNce { logits, tau, probs } => {
                let gv = g.item();
                let data = probs
                    .iter()
                    .enumerate()
                    .map(|(j, &p)| {
                        let target = if j == 0 { S::one() } else { S::zero() };
                        gv * (p - target) / *tau
                    })
                    .collect();
                let shape = self.value(*logits).shape().to_vec();
                self.accumulate(grads, *logits, Tensor::new(&shape, data).expect("shape"));
            }
            Op::Bce { scores, labels } => {
                let gv = g.item();
                let st = self.value(*scores);
                let n = S::from_f64(labels.len() as f64);
                let data = st
                    .data()
                    .iter()
                    .zip(labels)
                    .map(|(&s, &y)| {
                        let s = clamp_prob(s);
                        gv * (-(y / s) + (S::one() - y) / (S::one() - s)) / n
                    })
                    .collect();
                self.accumulate(grads, *scores, Tensor::new(st.shape(), data).expect("shape"));
            }
        }
    }
}

fn elementwise<S: Scalar>(g: &Tensor<S>, x: &Tensor<S>, f: impl Fn(S, S) -> S) -> Tensor<S> {
    let data = g.data().iter().zip(x.data()).map(|(&g, &x)| f(g, x)).collect();
    Tensor::new(g.shape(), data).expect("shape")
}

fn norm<S: Scalar>(x: &[S]) -> S {
    x.iter().fold(S::zero(), |acc, &v| acc + v * v).sqrt()
}

pub(crate) fn cosine_of<S: Scalar>(a: &[S], b: &[S]) -> Option<S> {
    let (na, nb) = (norm(a), norm(b));
    if na == S::zero() || nb == S::zero() {
        return None;
    }
    let dot = a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y);
    Some(dot / (na * nb))
}

/// `d cos(a, b) / da = b / (|a||b|) - cos * a / |a|^2`, scaled by `g`.
fn cosine_grad<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>, na: S, nb: S, cos: S, g: S) -> Tensor<S> {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| g * (y / (na * nb) - cos * x / (na * na)))
        .collect();
    Tensor::new(a.shape(), data).expect("shape")
}

const PROB_EPS: f64 = 1e-7;

fn clamp_prob<S: Scalar>(s: S) -> S {
    let eps = S::from_f64(PROB_EPS);
    s.max(eps).min(S::one() - eps)
}

pub(crate) fn bce_value<S: Scalar>(scores: &[S], labels: &[S]) -> S {
    let total = scores.iter().zip(labels).fold(S::zero(), |acc, (&s, &y)| {
        let s = clamp_prob(s);
        acc - (y * s.ln() + (S::one() - y) * (S::one() - s).ln())
    });
    total / S::from_f64(labels.len() as f64)
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
///
/// Only leaves keep their gradient; intermediate buffers are released as
/// the reverse sweep passes them.
pub struct Gradients<S: Scalar = f32> {
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, v: Var) -> Option<&Tensor<S>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<S>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_sum_gradient() {
        let x = Tensor::<f32>::new(&[3], vec![1., -2., 4.]).unwrap();
        let mut tape = Tape::new();
        let v = tape.param(&x);
        let y = tape.scale(v, 2.0);
        let loss = tape.sum(y);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(v).unwrap().data(), &[2., 2., 2.]);
    }

    #[test]
    fn gelu_gradient_at_zero() {
        let x = Tensor::<f64>::zeros(&[4]);
        let mut tape = Tape::new();
        let v = tape.param(&x);
        let y = tape.gelu(v);
        let loss = tape.sum(y);
        let g = tape.backward(loss).unwrap();
        assert!(g.get(v).unwrap().data().iter().all(|&d| (d - 0.5).abs() < 1e-15));
    }

    #[test]
    fn shared_value_accumulates_both_branches() {
        // loss = sum(3x) + sum(x * x) at x => grad = 3 + 2x
        let x = Tensor::<f64>::new(&[3], vec![1., 2., -1.]).unwrap();
        let mut tape = Tape::new();
        let v = tape.param(&x);
        let a = tape.scale(v, 3.0);
        let b = tape.mul(v, v).unwrap();
        let s = tape.add(a, b).unwrap();
        let loss = tape.sum(s);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(v).unwrap().data(), &[5., 7., 1.]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let x = Tensor::<f32>::zeros(&[2]);
        let mut tape = Tape::new();
        let v = tape.param(&x);
        let y = tape.gelu(v);
        assert!(matches!(tape.backward(y), Err(Error::Shape(_))));
    }

    #[test]
    fn maxpool_routes_to_winner_only() {
        let x = Tensor::<f32>::new(&[2, 3], vec![1., 7., 7., 4., 0., 2.]).unwrap();
        let mut tape = Tape::new();
        let v = tape.param(&x);
        let p = tape.maxpool(v, 1, None).unwrap();
        let loss = tape.sum(p);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(v).unwrap().data(), &[0., 1., 0., 1., 0., 0.]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let x = Tensor::<f32>::from_vec(vec![1., 2.]);
        let mut tape = Tape::new();
        let p = tape.param(&x);
        let c = tape.constant(Tensor::from_vec(vec![3., 4.]));
        let d = tape.dot(p, c).unwrap();
        let g = tape.backward(d).unwrap();
        assert_eq!(g.get(p).unwrap().data(), &[3., 4.]);
        assert!(g.get(c).is_none());
    }

    #[test]
    fn info_nce_uniform_and_empty() {
        let mut tape = Tape::<f64>::new();
        let only_pos = tape.constant(Tensor::from_vec(vec![0.3]));
        let l = tape.info_nce(only_pos, 0.007).unwrap();
        assert_eq!(tape.value(l).item(), 0.0);
        let uniform = tape.constant(Tensor::from_vec(vec![0.2; 4]));
        let l = tape.info_nce(uniform, 0.007).unwrap();
        assert!((tape.value(l).item() - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cosine_zero_norm_is_error() {
        let mut tape = Tape::<f32>::new();
        let a = tape.constant(Tensor::zeros(&[3]));
        let b = tape.constant(Tensor::from_vec(vec![1., 0., 0.]));
        assert!(matches!(tape.cosine(a, b), Err(Error::ZeroNorm)));
    }
}
