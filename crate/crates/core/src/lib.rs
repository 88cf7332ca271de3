//! Separable nonnegative matrix factorization toolkit.
//!
//! Column-selection algorithms for `A = F [I, H] Π + N`: the successive
//! projection algorithm ([`spa`]), its ellipsoid-preconditioned variants
//! ([`select`]), SPA-seeded and randomized rank-k approximation with bound
//! diagnostics ([`lowrank`]), the minimum-volume enclosing ellipsoid solver
//! ([`mvee`]), synthetic instances ([`synth`]) and evaluation metrics
//! ([`metrics`]).

pub mod cli;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod lowrank;
pub mod metrics;
pub mod mvee;
pub mod report;
pub mod rng;
pub mod select;
pub mod spa;
pub mod synth;
pub mod timing;

pub use error::{Error, Result};
pub use linalg::DenseMatrix;
pub use spa::IndexSet;
