//! Exogenous-to-endogenous mapping.
//!
//! [`solve_linear_scm`] is the closed-form linear case `z = Aᵀz + u`, solved by
//! forward substitution in topological order (never dense inversion).
//! [`MechanismSet`] is the learned general case: per-variable two-layer MLPs
//! in additive-noise form `z_i = f_i(masked parents) + u_i`. Masking is
//! structural — non-parent blocks enter as exact zeros — so a variable's value
//! cannot depend on a non-ancestor even with untrained weights.

use cda_tensor::nn::{Graph, Linear, Params};
use cda_tensor::{Scalar, Var};
use ndarray::{Array2, ArrayD};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::CausalGraph;

#[derive(Debug, Error)]
pub enum ScmError {
    #[error("noise has {got} blocks, graph has {expected} variables")]
    BlockCount { expected: usize, got: usize },
    #[error("block width mismatch: expected {expected}, got {got}")]
    BlockWidth { expected: usize, got: usize },
    #[error("intervention target {index} out of range for {n} variables")]
    TargetIndex { index: usize, n: usize },
    #[error("duplicate intervention target {0}")]
    DuplicateTarget(usize),
}

/// Solves `z = Aᵀz + u` by substitution in topological order. `u` has one row
/// per variable; scalar coefficients `a[[j, i]]` scale whole rows, so the
/// width can be a d_z block, a batch, or both flattened together.
pub fn solve_linear_scm<T: Scalar>(
    graph: &CausalGraph,
    u: &Array2<T>,
) -> Result<Array2<T>, ScmError> {
    let n = graph.n();
    if u.nrows() != n {
        return Err(ScmError::BlockCount { expected: n, got: u.nrows() });
    }
    let mut z = u.clone();
    for &i in graph.order() {
        for j in graph.parents(i) {
            let w = T::of_f64(graph.adjacency()[[j, i]]);
            let parent = z.row(j).to_owned();
            z.row_mut(i).zip_mut_with(&parent, |zi, &pj| *zi += w * pj);
        }
    }
    Ok(z)
}

/// Per-variable mechanism networks `f_i`, all parameters living in a shared
/// store under `<prefix>.<i>.*` names.
pub struct MechanismSet {
    n: usize,
    d_z: usize,
    nets: Vec<(Linear, Linear)>,
}

impl MechanismSet {
    /// Hidden width is `2 * d_z`; the output head starts at zero so an
    /// untrained SCM is the identity map `z = u`.
    pub fn new<T: Scalar>(
        params: &mut Params<T>,
        prefix: &str,
        graph: &CausalGraph,
        d_z: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let n = graph.n();
        let hidden = 2 * d_z;
        let nets = (0..n)
            .map(|i| {
                let fc1 = Linear::new(params, &format!("{prefix}.{i}.fc1"), n * d_z, hidden, rng);
                let fc2 = Linear::zeros(params, &format!("{prefix}.{i}.fc2"), hidden, d_z);
                (fc1, fc2)
            })
            .collect();
        MechanismSet { n, d_z, nets }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d_z(&self) -> usize {
        self.d_z
    }

    /// The two dense layers of `f_i`, exposed for inspection.
    pub fn net(&self, i: usize) -> &(Linear, Linear) {
        &self.nets[i]
    }

    /// `z = f(u)`: runs every mechanism in topological order on a
    /// `[B, n*d_z]` noise tensor, returning `[B, n*d_z]`.
    pub fn apply<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        graph: &CausalGraph,
        u: Var,
    ) -> Result<Var, ScmError> {
        self.run(g, graph, u, &[])
    }

    /// Do-intervention: targeted blocks are replaced by the supplied
    /// `[B, d_z]` values (ignoring parents and noise), and descendants
    /// recompute from the modified parents.
    pub fn intervene<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        graph: &CausalGraph,
        u: Var,
        targets: &[(usize, Var)],
    ) -> Result<Var, ScmError> {
        for (pos, &(i, _)) in targets.iter().enumerate() {
            if i >= self.n {
                return Err(ScmError::TargetIndex { index: i, n: self.n });
            }
            if targets[..pos].iter().any(|&(j, _)| j == i) {
                return Err(ScmError::DuplicateTarget(i));
            }
        }
        self.run(g, graph, u, targets)
    }

    fn run<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        graph: &CausalGraph,
        u: Var,
        targets: &[(usize, Var)],
    ) -> Result<Var, ScmError> {
        let shape = g.shape(u).to_vec();
        if shape.len() != 2 || shape[1] != self.n * self.d_z {
            return Err(ScmError::BlockWidth { expected: self.n * self.d_z, got: *shape.last().unwrap_or(&0) });
        }
        let batch = shape[0];
        let zeros = g.input(ArrayD::zeros(ndarray::IxDyn(&[batch, self.d_z])));

        let mut z_blocks: Vec<Option<Var>> = vec![None; self.n];
        for &i in graph.order() {
            if let Some(&(_, c)) = targets.iter().find(|&&(t, _)| t == i) {
                let cshape = g.shape(c);
                if cshape != [batch, self.d_z] {
                    return Err(ScmError::BlockWidth { expected: self.d_z, got: *cshape.last().unwrap_or(&0) });
                }
                z_blocks[i] = Some(c);
                continue;
            }
            // Masked input: parent blocks in place, everything else an exact
            // zero block. Topological order guarantees parents are done.
            let parts: Vec<Var> = (0..self.n)
                .map(|j| {
                    if graph.has_edge(j, i) {
                        z_blocks[j].expect("topological order visits parents first")
                    } else {
                        zeros
                    }
                })
                .collect();
            let x = g.concat(&parts, 1);
            let (fc1, fc2) = &self.nets[i];
            let h = fc1.forward(g, x);
            let h = g.tanh(h);
            let f = fc2.forward(g, h);
            let u_i = g.narrow(u, 1, i * self.d_z, self.d_z);
            z_blocks[i] = Some(g.add(f, u_i));
        }

        let blocks: Vec<Var> = (0..self.n)
            .map(|i| z_blocks[i].expect("all variables visited"))
            .collect();
        Ok(g.concat(&blocks, 1))
    }
}
