//! Latent structural causal model over block-valued variables.
//!
//! A [`CausalGraph`] is a DAG given by a real adjacency matrix (`a[[j, i]]`
//! nonzero means variable `j` causes variable `i`) plus factor names and a
//! cached topological order. Endogenous values are produced from exogenous
//! noise either by the closed-form linear solve ([`solve_linear_scm`]) or by
//! learned per-variable networks ([`MechanismSet`]) in the additive-noise form
//! `z_i = f_i(parents of z_i) + u_i`. Interventions replace a block outright
//! and let downstream mechanisms propagate the change.

mod graph;
mod mechanisms;

pub use graph::{topological_order, validate_dag, CausalGraph, GraphError};
pub use mechanisms::{solve_linear_scm, MechanismSet, ScmError};
