//! Reverse-mode automatic differentiation over dynamic-rank `ndarray` arrays.
//!
//! A [`Tape`] records every operation applied during one forward pass; nodes
//! are identified by [`Var`] handles in creation order, which is already a
//! topological order, so [`Tape::backward`] is a single reverse sweep. The op
//! set is exactly what the models in this workspace need: elementwise
//! arithmetic with numpy-style broadcasting, a few activations, 2-D matrix
//! product, shape plumbing, 3x3-style convolutions, nearest upsampling, and a
//! fused group norm.

use ndarray::{ArrayD, Axis, Ix2, IxDyn};

use crate::kernels;
use crate::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone, Copy)]
enum Unary {
    Neg,
    Exp,
    Ln,
    Sqrt,
    Tanh,
    Sigmoid,
    Silu,
    Softplus,
    Square,
}

#[derive(Debug, Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Unary(Unary, Var),
    Binary(Binary, Var, Var),
    /// `value = a * scale + shift`; only the scale matters in backward.
    Affine {
        a: Var,
        scale: f64,
    },
    Clamp {
        a: Var,
        lo: f64,
        hi: f64,
    },
    Matmul(Var, Var),
    Reshape(Var),
    SumAll(Var),
    /// Keeps the reduced axis with length 1; backward re-broadcasts it.
    SumAxis(Var),
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Narrow {
        a: Var,
        axis: usize,
        start: usize,
    },
    Conv2d {
        x: Var,
        w: Var,
        stride: usize,
        pad: usize,
    },
    UpsampleNearest2x(Var),
    GroupNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        groups: usize,
    },
}

enum Aux<T: Scalar> {
    /// Unfolded input patches, reused by the convolution backward pass.
    Conv { col: ArrayD<T> },
    /// Per-(sample, group) statistics from the normalisation forward pass.
    GroupNorm { mean: ArrayD<T>, rstd: ArrayD<T> },
}

struct Node<T: Scalar> {
    op: Op,
    value: ArrayD<T>,
    aux: Option<Aux<T>>,
    needs_grad: bool,
}

/// Gradients from one [`Tape::backward`] sweep, indexed by [`Var`].
pub struct Grads<T: Scalar> {
    by_var: Vec<Option<ArrayD<T>>>,
}

impl<T: Scalar> Grads<T> {
    pub fn get(&self, v: Var) -> Option<&ArrayD<T>> {
        self.by_var.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<ArrayD<T>> {
        self.by_var.get_mut(v.0).and_then(|g| g.take())
    }
}

/// Records a forward computation and differentiates it in reverse.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers `value` as an input node. Gradients flow into it only when
    /// `trainable` is true.
    pub fn leaf(&mut self, value: ArrayD<T>, trainable: bool) -> Var {
        self.push(Op::Leaf, value, None, trainable)
    }

    pub fn value(&self, v: Var) -> &ArrayD<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Reads a 0-dimensional node as a scalar.
    pub fn scalar_value(&self, v: Var) -> T {
        let val = &self.nodes[v.0].value;
        assert!(val.ndim() == 0, "scalar_value on node of shape {:?}", val.shape());
        *val.first().expect("0-d array has one element")
    }

    fn push(&mut self, op: Op, value: ArrayD<T>, aux: Option<Aux<T>>, needs_grad: bool) -> Var {
        self.nodes.push(Node { op, value, aux, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    // ---- elementwise ----------------------------------------------------

    fn unary(&mut self, u: Unary, a: Var) -> Var {
        let x = &self.nodes[a.0].value;
        let value = match u {
            Unary::Neg => x.mapv(|v| -v),
            Unary::Exp => x.mapv(|v| v.exp()),
            Unary::Ln => x.mapv(|v| v.ln()),
            Unary::Sqrt => x.mapv(|v| v.sqrt()),
            Unary::Tanh => x.mapv(|v| v.tanh()),
            Unary::Sigmoid => x.mapv(sigmoid),
            Unary::Silu => x.mapv(|v| v * sigmoid(v)),
            Unary::Softplus => x.mapv(softplus),
            Unary::Square => x.mapv(|v| v * v),
        };
        let needs = self.needs(a);
        self.push(Op::Unary(u, a), value, None, needs)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(Unary::Neg, a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(Unary::Exp, a)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(Unary::Ln, a)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(Unary::Sqrt, a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Unary::Tanh, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn silu(&mut self, a: Var) -> Var {
        self.unary(Unary::Silu, a)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(Unary::Softplus, a)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(Unary::Square, a)
    }

    fn binary(&mut self, b: Binary, lhs: Var, rhs: Var) -> Var {
        let (x, y) = (&self.nodes[lhs.0].value, &self.nodes[rhs.0].value);
        let value = broadcast_zip(x, y, |u, v| match b {
            Binary::Add => u + v,
            Binary::Sub => u - v,
            Binary::Mul => u * v,
            Binary::Div => u / v,
        });
        let needs = self.needs(lhs) || self.needs(rhs);
        self.push(Op::Binary(b, lhs, rhs), value, None, needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Div, a, b)
    }

    /// `a * scale + shift` with compile-time constants.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let (s, c) = (T::of_f64(scale), T::of_f64(shift));
        let value = self.nodes[a.0].value.mapv(|v| v * s + c);
        let needs = self.needs(a);
        self.push(Op::Affine { a, scale }, value, None, needs)
    }

    pub fn scale(&mut self, a: Var, scale: f64) -> Var {
        self.affine(a, scale, 0.0)
    }

    /// Clamps into `[lo, hi]`; the gradient is zero outside the open interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let (l, h) = (T::of_f64(lo), T::of_f64(hi));
        let value = self.nodes[a.0].value.mapv(|v| v.max(l).min(h));
        let needs = self.needs(a);
        self.push(Op::Clamp { a, lo, hi }, value, None, needs)
    }

    // ---- linear algebra -------------------------------------------------

    /// 2-D matrix product `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let x = view2(&self.nodes[a.0].value, "matmul lhs");
        let y = view2(&self.nodes[b.0].value, "matmul rhs");
        assert!(
            x.ncols() == y.nrows(),
            "matmul shape mismatch: {:?} x {:?}",
            x.shape(),
            y.shape()
        );
        let value = kernels::matmul(&x, &y).into_dyn();
        let needs = self.needs(a) || self.needs(b);
        self.push(Op::Matmul(a, b), value, None, needs)
    }

    // ---- shape plumbing -------------------------------------------------

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let x = &self.nodes[a.0].value;
        let n: usize = shape.iter().product();
        assert!(n == x.len(), "reshape {:?} -> {:?} changes element count", x.shape(), shape);
        let value = to_standard(x)
            .into_shape_with_order(IxDyn(shape))
            .expect("standard-layout reshape");
        let needs = self.needs(a);
        self.push(Op::Reshape(a), value, None, needs)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: T = self.nodes[a.0].value.sum();
        let needs = self.needs(a);
        self.push(Op::SumAll(a), scalar_array(s), None, needs)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.nodes[a.0].value.len();
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n as f64)
    }

    /// Sums along `axis`, keeping it with length 1.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Var {
        let x = &self.nodes[a.0].value;
        assert!(axis < x.ndim(), "sum_axis {} on rank {}", axis, x.ndim());
        let value = x.sum_axis(Axis(axis)).insert_axis(Axis(axis));
        let needs = self.needs(a);
        self.push(Op::SumAxis(a), value, None, needs)
    }

    /// Mean along `axis`, keeping it with length 1.
    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Var {
        let n = self.nodes[a.0].value.shape()[axis];
        let s = self.sum_axis(a, axis);
        self.scale(s, 1.0 / n as f64)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Var {
        assert!(!parts.is_empty(), "concat of zero parts");
        let views: Vec<_> = parts.iter().map(|p| self.nodes[p.0].value.view()).collect();
        let value = ndarray::concatenate(Axis(axis), &views).expect("concat shape mismatch");
        let needs = parts.iter().any(|p| self.needs(*p));
        self.push(Op::Concat { parts: parts.to_vec(), axis }, value, None, needs)
    }

    /// Slice `[start, start+len)` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Var {
        let x = &self.nodes[a.0].value;
        assert!(
            axis < x.ndim() && start + len <= x.shape()[axis],
            "narrow axis {} [{}, {}) out of bounds for {:?}",
            axis,
            start,
            start + len,
            x.shape()
        );
        let value = x
            .slice_axis(Axis(axis), ndarray::Slice::from(start..start + len))
            .to_owned();
        let needs = self.needs(a);
        self.push(Op::Narrow { a, axis, start }, value, None, needs)
    }

    // ---- structured ops -------------------------------------------------

    /// 2-D convolution, NCHW input, OIHW weight, symmetric zero padding.
    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Var {
        let xv = &self.nodes[x.0].value;
        let wv = &self.nodes[w.0].value;
        let (value, col) = kernels::conv2d_forward(xv, wv, stride, pad);
        let needs = self.needs(x) || self.needs(w);
        let aux = needs.then_some(Aux::Conv { col });
        self.push(Op::Conv2d { x, w, stride, pad }, value, aux, needs)
    }

    /// Nearest-neighbour 2x spatial upsampling of an NCHW tensor.
    pub fn upsample_nearest_2x(&mut self, a: Var) -> Var {
        let value = kernels::upsample_nearest_2x(&self.nodes[a.0].value);
        let needs = self.needs(a);
        self.push(Op::UpsampleNearest2x(a), value, None, needs)
    }

    /// Group normalisation of an NCHW tensor with per-channel affine params
    /// (`gamma`, `beta` of shape `[C]`).
    pub fn group_norm(&mut self, x: Var, gamma: Var, beta: Var, groups: usize) -> Var {
        let xv = &self.nodes[x.0].value;
        let gv = &self.nodes[gamma.0].value;
        let bv = &self.nodes[beta.0].value;
        let (value, mean, rstd) = kernels::group_norm_forward(xv, gv, bv, groups);
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        let aux = needs.then_some(Aux::GroupNorm { mean, rstd });
        self.push(Op::GroupNorm { x, gamma, beta, groups }, value, aux, needs)
    }

    // ---- composites -----------------------------------------------------

    /// Mean of squared differences over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Var {
        let d = self.sub(a, b);
        let sq = self.square(d);
        self.mean_all(sq)
    }

    // ---- backward -------------------------------------------------------

    /// Accumulates `d root / d node` for every node reachable from `root`
    /// that has a trainable ancestor. `root` is seeded with ones (for losses
    /// it is a 0-d scalar).
    pub fn backward(&self, root: Var) -> Grads<T> {
        let mut by_var: Vec<Option<ArrayD<T>>> = vec![None; self.nodes.len()];
        by_var[root.0] = Some(ArrayD::ones(self.nodes[root.0].value.raw_dim()));

        for id in (0..=root.0).rev() {
            if by_var[id].is_none() || !self.nodes[id].needs_grad {
                continue;
            }
            let g = by_var[id].take().expect("checked above");
            self.accumulate_parents(id, &g, &mut by_var);
            // Re-store the gradient so callers can read grads of interior
            // nodes too (useful in tests).
            by_var[id] = Some(g);
        }
        Grads { by_var }
    }

    fn accumulate_parents(&self, id: usize, g: &ArrayD<T>, by_var: &mut [Option<ArrayD<T>>]) {
        let node = &self.nodes[id];
        let send = |v: Var, contrib: ArrayD<T>, by_var: &mut [Option<ArrayD<T>>]| {
            if !self.needs(v) {
                return;
            }
            let reduced = reduce_grad_to(contrib, self.nodes[v.0].value.shape());
            match &mut by_var[v.0] {
                Some(acc) => *acc += &reduced,
                slot @ None => *slot = Some(reduced),
            }
        };

        match &node.op {
            Op::Leaf => {}
            Op::Unary(u, a) => {
                let x = &self.nodes[a.0].value;
                let y = &node.value;
                let contrib = match u {
                    Unary::Neg => g.mapv(|v| -v),
                    Unary::Exp => g * y,
                    Unary::Ln => broadcast_zip(g, x, |gi, xi| gi / xi),
                    Unary::Sqrt => {
                        let half = T::of_f64(0.5);
                        broadcast_zip(g, y, |gi, yi| gi * half / yi)
                    }
                    Unary::Tanh => broadcast_zip(g, y, |gi, yi| gi * (T::one() - yi * yi)),
                    Unary::Sigmoid => broadcast_zip(g, y, |gi, yi| gi * yi * (T::one() - yi)),
                    Unary::Silu => broadcast_zip(g, x, |gi, xi| {
                        let s = sigmoid(xi);
                        gi * s * (T::one() + xi * (T::one() - s))
                    }),
                    Unary::Softplus => broadcast_zip(g, x, |gi, xi| gi * sigmoid(xi)),
                    Unary::Square => {
                        let two = T::of_f64(2.0);
                        broadcast_zip(g, x, |gi, xi| gi * two * xi)
                    }
                };
                send(*a, contrib, by_var);
            }
            Op::Binary(b, lhs, rhs) => {
                let (x, y) = (&self.nodes[lhs.0].value, &self.nodes[rhs.0].value);
                match b {
                    Binary::Add => {
                        send(*lhs, g.clone(), by_var);
                        send(*rhs, g.clone(), by_var);
                    }
                    Binary::Sub => {
                        send(*lhs, g.clone(), by_var);
                        send(*rhs, g.mapv(|v| -v), by_var);
                    }
                    Binary::Mul => {
                        send(*lhs, broadcast_zip(g, y, |gi, yi| gi * yi), by_var);
                        send(*rhs, broadcast_zip(g, x, |gi, xi| gi * xi), by_var);
                    }
                    Binary::Div => {
                        send(*lhs, broadcast_zip(g, y, |gi, yi| gi / yi), by_var);
                        let num = broadcast_zip(g, x, |gi, xi| gi * xi);
                        send(*rhs, broadcast_zip(&num, y, |ni, yi| -ni / (yi * yi)), by_var);
                    }
                }
            }
            Op::Affine { a, scale } => {
                let s = T::of_f64(*scale);
                send(*a, g.mapv(|v| v * s), by_var);
            }
            Op::Clamp { a, lo, hi } => {
                let (l, h) = (T::of_f64(*lo), T::of_f64(*hi));
                let x = &self.nodes[a.0].value;
                let contrib = broadcast_zip(g, x, |gi, xi| if xi > l && xi < h { gi } else { T::zero() });
                send(*a, contrib, by_var);
            }
            Op::Matmul(a, b) => {
                let x = view2(&self.nodes[a.0].value, "matmul lhs");
                let y = view2(&self.nodes[b.0].value, "matmul rhs");
                let gm = view2(g, "matmul grad");
                send(*a, kernels::matmul(&gm, &y.t()).into_dyn(), by_var);
                send(*b, kernels::matmul(&x.t(), &gm).into_dyn(), by_var);
            }
            Op::Reshape(a) => {
                let shape = self.nodes[a.0].value.shape().to_vec();
                let contrib = to_standard(g)
                    .into_shape_with_order(IxDyn(&shape))
                    .expect("reshape backward");
                send(*a, contrib, by_var);
            }
            Op::SumAll(a) => {
                let gs = *g.first().expect("0-d grad");
                let shape = self.nodes[a.0].value.raw_dim();
                send(*a, ArrayD::from_elem(shape, gs), by_var);
            }
            Op::SumAxis(a) => {
                // `reduce_grad_to` inside `send` broadcasts the kept axis back.
                let shape = self.nodes[a.0].value.shape().to_vec();
                let contrib = g
                    .broadcast(IxDyn(&shape))
                    .expect("sum_axis backward broadcast")
                    .to_owned();
                send(*a, contrib, by_var);
            }
            Op::Concat { parts, axis } => {
                let mut start = 0;
                for p in parts {
                    let len = self.nodes[p.0].value.shape()[*axis];
                    let piece = g
                        .slice_axis(Axis(*axis), ndarray::Slice::from(start..start + len))
                        .to_owned();
                    send(*p, piece, by_var);
                    start += len;
                }
            }
            Op::Narrow { a, axis, start } => {
                let mut contrib = ArrayD::zeros(self.nodes[a.0].value.raw_dim());
                let len = node.value.shape()[*axis];
                contrib
                    .slice_axis_mut(Axis(*axis), ndarray::Slice::from(*start..*start + len))
                    .assign(g);
                send(*a, contrib, by_var);
            }
            Op::Conv2d { x, w, stride, pad } => {
                let col = match &node.aux {
                    Some(Aux::Conv { col }) => col,
                    _ => unreachable!("conv node with grad flow keeps its col buffer"),
                };
                let xv = &self.nodes[x.0].value;
                let wv = &self.nodes[w.0].value;
                let (dx, dw) = kernels::conv2d_backward(xv, wv, col, g, *stride, *pad);
                send(*x, dx, by_var);
                send(*w, dw, by_var);
            }
            Op::UpsampleNearest2x(a) => {
                send(*a, kernels::upsample_nearest_2x_backward(g), by_var);
            }
            Op::GroupNorm { x, gamma, beta, groups } => {
                let (mean, rstd) = match &node.aux {
                    Some(Aux::GroupNorm { mean, rstd }) => (mean, rstd),
                    _ => unreachable!("group norm node with grad flow keeps its stats"),
                };
                let xv = &self.nodes[x.0].value;
                let gv = &self.nodes[gamma.0].value;
                let (dx, dgamma, dbeta) =
                    kernels::group_norm_backward(xv, gv, mean, rstd, g, *groups);
                send(*x, dx, by_var);
                send(*gamma, dgamma, by_var);
                send(*beta, dbeta, by_var);
            }
        }
    }
}

// ---- helpers ------------------------------------------------------------

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn softplus<T: Scalar>(x: T) -> T {
    // max(x, 0) + ln(1 + exp(-|x|)) is stable at both tails.
    x.max(T::zero()) + (T::one() + (-x.abs()).exp()).ln()
}

fn scalar_array<T: Scalar>(v: T) -> ArrayD<T> {
    ArrayD::from_elem(IxDyn(&[]), v)
}

fn to_standard<T: Scalar>(x: &ArrayD<T>) -> ArrayD<T> {
    if x.is_standard_layout() {
        x.clone()
    } else {
        x.as_standard_layout().to_owned()
    }
}

fn view2<'a, T: Scalar>(x: &'a ArrayD<T>, what: &str) -> ndarray::ArrayView2<'a, T> {
    x.view()
        .into_dimensionality::<Ix2>()
        .unwrap_or_else(|_| panic!("{} must be rank 2, got {:?}", what, x.shape()))
}

/// Right-aligned numpy-style broadcast shape of `a` and `b`.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i < n - a.len() { 1 } else { a[i - (n - a.len())] };
        let db = if i < n - b.len() { 1 } else { b[i - (n - b.len())] };
        assert!(
            da == db || da == 1 || db == 1,
            "shapes {:?} and {:?} do not broadcast",
            a,
            b
        );
        out[i] = da.max(db);
    }
    out
}

fn broadcast_zip<T: Scalar>(a: &ArrayD<T>, b: &ArrayD<T>, f: impl Fn(T, T) -> T) -> ArrayD<T> {
    if a.shape() == b.shape() {
        let mut out = to_standard(a);
        out.zip_mut_with(b, |u, v| *u = f(*u, *v));
        return out;
    }
    let shape = broadcast_shape(a.shape(), b.shape());
    let av = a.broadcast(IxDyn(&shape)).expect("lhs broadcast");
    let bv = b.broadcast(IxDyn(&shape)).expect("rhs broadcast");
    let mut out = av.to_owned();
    out.zip_mut_with(&bv, |u, v| *u = f(*u, *v));
    out
}

/// Sums a broadcasted gradient back down to `shape`.
fn reduce_grad_to<T: Scalar>(mut g: ArrayD<T>, shape: &[usize]) -> ArrayD<T> {
    while g.ndim() > shape.len() {
        g = g.sum_axis(Axis(0));
    }
    for (axis, (&dg, &ds)) in g.shape().to_vec().iter().zip(shape).enumerate() {
        if dg != ds {
            debug_assert!(ds == 1, "grad shape {:?} vs value shape {:?}", g.shape(), shape);
            g = g.sum_axis(Axis(axis)).insert_axis(Axis(axis));
        }
    }
    g
}
