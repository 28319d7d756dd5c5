//! Lindblad simulation of the NV-center electron/nitrogen-nuclear spin system
//! under optical pumping, with pulse sequences, tomography, a closed-form
//! phase-susceptibility model and curve fitting.
//!
//! Every numerical type is generic over [`scalar::Real`]; the aliases below fix
//! the scalar to `f64`, which is what the CLI and the tests use.

pub mod analytics;
pub mod engine;
pub mod error;
pub mod expm;
pub mod fitting;
pub mod levels;
pub mod nvmodel;
pub mod scalar;
pub mod sequences;
pub mod spinops;
pub mod tomography;

pub use error::{Error, Result};
pub use levels::{BasisState, Manifold};

pub type ComplexMatrix = spinops::ComplexMatrix<f64>;
pub type DensityMatrix = spinops::DensityMatrix<f64>;
