//! Resolution over clauses of F₂-linear equations, and everything needed to turn its
//! refutations into communication protocols and monotone circuits with a local oracle.
//!
//! Modules, bottom up:
//! - [`f2`]: bit vectors, affine polynomials, matrices, canonical row reduction.
//! - [`proof`]: clauses, the four inference rules, checker, semantic oracle, PC translation.
//! - [`instances`]: pigeonhole and clique/coloring families, witness samplers, a saturation
//!   refuter and the resolution embedding.
//! - [`approx`]: random subset-sum clause approximation and randomized width reduction.
//! - [`protocols`]: dag protocols, interpolation engines, parity protocol, error estimation.
//! - [`clo`]: monotone circuits with a local oracle and the protocol correspondences.
//! - [`cli`]: the `rlin` command-line front end.

pub mod approx;
pub mod cli;
pub mod clo;
pub mod f2;
pub mod format;
pub mod instances;
pub mod proof;
pub mod protocols;
pub mod seed;

pub use f2::{BitVec, F2Error, F2Matrix, LinPoly};
pub use proof::{Clause, Proof, ProofLine, Rule};
