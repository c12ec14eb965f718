//! Named parameter store, per-step graph binding, and the small layer set
//! shared by every network in the workspace.
//!
//! Parameters live in a [`Params`] store keyed by dotted names (the names are
//! also the serialization schema). A forward pass opens a [`Graph`], which
//! binds parameters onto a fresh [`Tape`] on first use; after `backward`,
//! [`Graph::param_grads`] returns gradients aligned with the store's order so
//! the optimiser never sees tape internals.

use std::collections::HashMap;

use ndarray::{ArrayD, IxDyn};
use rand_chacha::ChaCha8Rng;

use crate::rng::next_standard_normal;
use crate::tape::{Grads, Tape, Var};
use crate::Scalar;

/// Index of a parameter inside a [`Params`] store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) fn param_id_from_index(i: usize) -> ParamId {
    ParamId(i)
}

/// Ordered, name-unique collection of trainable arrays.
pub struct Params<T: Scalar> {
    names: Vec<String>,
    values: Vec<ArrayD<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Default for Params<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Params<T> {
    pub fn new() -> Self {
        Params { names: Vec::new(), values: Vec::new(), index: HashMap::new() }
    }

    /// Adds a parameter; names must be unique within the store.
    pub fn register(&mut self, name: &str, value: ArrayD<T>) -> ParamId {
        assert!(
            !self.index.contains_key(name),
            "parameter name registered twice: {name}"
        );
        self.names.push(name.to_string());
        self.values.push(value);
        self.index.insert(name.to_string(), self.values.len() - 1);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn get(&self, id: ParamId) -> &ArrayD<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ArrayD<T> {
        &mut self.values[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ArrayD<T>)> {
        self.names.iter().map(|n| n.as_str()).zip(self.values.iter())
    }

    /// Replaces a parameter's value; the shape must match.
    pub fn set(&mut self, id: ParamId, value: ArrayD<T>) {
        assert!(
            self.values[id.0].shape() == value.shape(),
            "shape mismatch for {}: {:?} vs {:?}",
            self.names[id.0],
            self.values[id.0].shape(),
            value.shape()
        );
        self.values[id.0] = value;
    }
}

/// One forward pass: a tape plus lazy bindings of store parameters.
pub struct Graph<'p, T: Scalar> {
    tape: Tape<T>,
    params: &'p Params<T>,
    bound: Vec<Option<Var>>,
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn new(params: &'p Params<T>) -> Self {
        Graph { tape: Tape::new(), params, bound: vec![None; params.len()] }
    }

    /// Binds a parameter onto the tape (cached per graph).
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.index()] {
            return v;
        }
        let v = self.tape.leaf(self.params.get(id).clone(), true);
        self.bound[id.index()] = Some(v);
        v
    }

    /// Binds a non-trainable input.
    pub fn input(&mut self, value: ArrayD<T>) -> Var {
        self.tape.leaf(value, false)
    }

    pub fn scalar_input(&mut self, value: T) -> Var {
        self.tape.leaf(ArrayD::from_elem(IxDyn(&[]), value), false)
    }

    /// Runs backward from `loss` and returns per-parameter gradients aligned
    /// with the store (None for parameters the loss never touched).
    pub fn param_grads(&self, loss: Var) -> Vec<Option<ArrayD<T>>> {
        let mut grads = self.tape.backward(loss);
        self.collect_param_grads(&mut grads)
    }

    fn collect_param_grads(&self, grads: &mut Grads<T>) -> Vec<Option<ArrayD<T>>> {
        self.bound
            .iter()
            .map(|slot| slot.and_then(|v| grads.take(v)))
            .collect()
    }
}

impl<T: Scalar> std::ops::Deref for Graph<'_, T> {
    type Target = Tape<T>;

    fn deref(&self) -> &Tape<T> {
        &self.tape
    }
}

impl<T: Scalar> std::ops::DerefMut for Graph<'_, T> {
    fn deref_mut(&mut self) -> &mut Tape<T> {
        &mut self.tape
    }
}

// ---- initialisation ------------------------------------------------------

/// Gaussian init with the given standard deviation.
pub fn randn<T: Scalar>(shape: &[usize], std: f64, rng: &mut ChaCha8Rng) -> ArrayD<T> {
    let mut out = ArrayD::zeros(IxDyn(shape));
    for v in out.iter_mut() {
        *v = next_standard_normal::<T>(rng) * T::of_f64(std);
    }
    out
}

// ---- layers --------------------------------------------------------------

/// Dense layer `y = x W + b` for `[B, in]` inputs.
pub struct Linear {
    w: ParamId,
    b: ParamId,
}

impl Linear {
    pub fn new<T: Scalar>(
        params: &mut Params<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let std = 1.0 / (d_in as f64).sqrt();
        let w = params.register(&format!("{name}.w"), randn(&[d_in, d_out], std, rng));
        let b = params.register(&format!("{name}.b"), ArrayD::zeros(IxDyn(&[d_out])));
        Linear { w, b }
    }

    /// Zero-initialised variant, used for output heads that should start as
    /// the identity contribution.
    pub fn zeros<T: Scalar>(params: &mut Params<T>, name: &str, d_in: usize, d_out: usize) -> Self {
        let w = params.register(&format!("{name}.w"), ArrayD::zeros(IxDyn(&[d_in, d_out])));
        let b = params.register(&format!("{name}.b"), ArrayD::zeros(IxDyn(&[d_out])));
        Linear { w, b }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, x: Var) -> Var {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let y = g.matmul(x, w);
        g.add(y, b)
    }

    pub fn weight(&self) -> ParamId {
        self.w
    }

    pub fn bias(&self) -> ParamId {
        self.b
    }
}

/// 2-D convolution layer with bias, NCHW layout.
pub struct Conv2d {
    w: ParamId,
    b: ParamId,
    c_out: usize,
    stride: usize,
    pad: usize,
}

impl Conv2d {
    pub fn new<T: Scalar>(
        params: &mut Params<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let std = (2.0 / (c_in * k * k) as f64).sqrt();
        let w = params.register(&format!("{name}.w"), randn(&[c_out, c_in, k, k], std, rng));
        let b = params.register(&format!("{name}.b"), ArrayD::zeros(IxDyn(&[c_out])));
        Conv2d { w, b, c_out, stride, pad }
    }

    /// Zero-initialised variant for final output convolutions.
    pub fn zeros<T: Scalar>(
        params: &mut Params<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let w = params.register(&format!("{name}.w"), ArrayD::zeros(IxDyn(&[c_out, c_in, k, k])));
        let b = params.register(&format!("{name}.b"), ArrayD::zeros(IxDyn(&[c_out])));
        Conv2d { w, b, c_out, stride, pad }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, x: Var) -> Var {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let y = g.conv2d(x, w, self.stride, self.pad);
        let b3 = g.reshape(b, &[self.c_out, 1, 1]);
        g.add(y, b3)
    }
}

/// Group normalisation layer with learned per-channel scale and shift.
pub struct GroupNorm {
    gamma: ParamId,
    beta: ParamId,
    groups: usize,
}

impl GroupNorm {
    pub fn new<T: Scalar>(params: &mut Params<T>, name: &str, channels: usize, groups: usize) -> Self {
        let gamma = params.register(&format!("{name}.gamma"), ArrayD::ones(IxDyn(&[channels])));
        let beta = params.register(&format!("{name}.beta"), ArrayD::zeros(IxDyn(&[channels])));
        GroupNorm { gamma, beta, groups }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, x: Var) -> Var {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.group_norm(x, gamma, beta, self.groups)
    }
}
