#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Conformal Hamiltonian mechanics on cotangent bundles in canonical
//! coordinates: scaling symmetries, conformal momentum maps, relative
//! equilibria of scaling symmetries and central configurations.

pub mod dynamics;
pub mod equilibria;
pub mod io;
mod lm;
pub mod phase;
pub mod scaling;
pub mod systems;
