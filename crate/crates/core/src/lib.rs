//! Communication-compressed Newton-type federated optimization in arbitrary
//! matrix bases.
//!
//! Clients encode their local Hessians as coefficient grids in a per-client
//! basis of `R^{d x d}` (or of the symmetric matrices), compress the change in
//! those coefficients, and the server reassembles a Hessian estimator from the
//! compressed messages. The crate is `no_std` with `alloc`; file formats, the
//! experiment driver and the CLI live in the `basiskit` crate.
//!
//! Module map:
//!
//! - [`matrix`]: dense linear algebra (Jacobi eigen/SVD, PSD projection,
//!   `vec`/`svec`).
//! - [`rng`]: reproducible per-(round, client, purpose) random streams.
//! - [`compress`]: Top-K, Rand-K, Rank-R, random dithering, natural
//!   compression, their compositions and bit-cost models.
//! - [`basis`]: matrix bases, coefficient maps and data-subspace bases.
//! - [`problem`]: regularized logistic regression split across clients.
//! - [`algo`]: BL1, BL2, BL3, Newton, GD and DIANA as round transitions.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod algo;
pub mod basis;
pub mod compress;
mod error;
pub mod matrix;
pub mod problem;
pub mod rng;

pub use error::{Error, Result};
