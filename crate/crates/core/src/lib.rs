//! Matrix-free photoacoustic tomography in two dimensions with variable sound
//! speed.
//!
//! The crate is organized bottom-up:
//!
//! - [`grid`]: node lattice, discrete disc and boundary, measurement arcs, periodic embedding.
//! - [`wavesolver`]: k-space pseudospectral wave propagation.
//! - [`operators`]: forward map, its adjoint, time reversal, weighted inner products.
//! - [`solvers`]: Landweber, Nesterov, CG on the normal equation, iterative time reversal.
//! - [`experiments`]: sound speed, phantoms, data simulation, noise, test cases.
//! - [`io`]: binary field and trace files, iteration logs.

pub mod error;
pub mod experiments;
pub mod field;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod operators;
pub mod solvers;
pub mod spectral;
pub mod wavesolver;

pub use error::{Error, Result};
pub use field::ScalarField;
pub use grid::{Domain, Grid, IndexSet};
pub use operators::{BoundaryTrace, PatOperator, Window};

/// Crate version, echoed into run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
