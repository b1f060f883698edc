//! Numerical toolkit for a regularized fractional Schrödinger / porous-medium
//! system on a periodic window: spectral operators, Sobolev inequality
//! checks, a mild-formulation solver, a-priori diagnostics, a Bihari–Grönwall
//! evaluator and entropy / weak-form residual checks.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod entropy;
pub mod error;
pub mod gronwall;
pub mod propagators;
pub mod quadrature;
pub mod singular;
pub mod sobolev;
pub mod solver;
pub mod spectral;
pub mod weakform;

pub use error::{Error, Result};
