//! Random V-variable Cantor measures and the spectral asymptotics of their
//! Krein-Feller operators.
//!
//! The pipeline: a [`catalog::Catalog`] of weighted IFSs drives sampled
//! environments and a materialized [`vtree::VTree`]; the tree's level-n cells
//! define the measure [`measure::CellDecomposition`]; [`assembly`] turns it
//! into a tridiagonal pencil whose eigenvalues are counted by [`eigensolve`].
//! [`spectral`] computes exponents and runs the bracketing and cut-set checks.

pub mod assembly;
pub mod catalog;
pub mod eigensolve;
pub mod error;
pub mod measure;
pub mod rng;
pub mod spectral;
pub mod vtree;

pub use error::{Error, Result};

/// Crate version, embedded in run outputs.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
