//! Numerical checks of heat kernel bounds, Kato-class criteria and
//! Feynman-Kac semigroup estimates on model Riemannian manifolds.

// `!(x > 0.0)` guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod geometry;
pub mod heat_kernel;
pub mod kato;
pub mod mvi;
pub mod potentials;
pub mod quadrature;
pub mod semigroup;
pub mod stochastics;
pub mod verdict;

pub use error::{Error, Result};
pub use verdict::Verdict;
