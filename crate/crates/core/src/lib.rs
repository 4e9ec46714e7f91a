//! Numerical laboratory for dyadic sparse domination on the unit torus.
//!
//! The core is generic over the floating point type ([`Scalar`], implemented for
//! `f32` and `f64`). The `*64` aliases below are the instantiations used by the
//! experiments; the `*32` ones exist for memory-bound sweeps where 1e-6 accuracy suffices.

pub mod error;
pub mod forms;
pub mod lattice;
pub mod normest;
pub mod operators;
pub mod scalar;
pub mod sparsify;
pub mod weights;

pub use error::{Error, Result};
pub use lattice::{DyadicCube, GridSpec, Shift, SparseFamily};
pub use operators::{DiagonalPolicy, ExponentConfig, KernelSpec};
pub use scalar::Scalar;

pub type GridFunction64 = lattice::GridFunction<f64>;
pub type GridFunction32 = lattice::GridFunction<f32>;
pub type Measure64 = lattice::Measure<f64>;
pub type Measure32 = lattice::Measure<f32>;
