//! Exponential elliptic boundary-value problems on a solid torus, reduced by
//! rotational symmetry to weighted problems on the unit disk, together with
//! numerical probes of the sharp Moser-Trudinger-type constants.

// `!(x > 0.0)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exec;
pub mod functionals;
pub mod geometry;
pub mod lab;
pub mod linalg;
pub mod mesh;
pub mod operators;
pub mod oracle;
pub mod solvers;
pub mod verify;

pub use error::{Error, Result};
pub use exec::Execution;
pub use geometry::{Chart, ChartCoords, Orbit, TorusParams, TorusPoint};
pub use mesh::DiskMesh;
pub use operators::{DiskField, WeightedOperators};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
