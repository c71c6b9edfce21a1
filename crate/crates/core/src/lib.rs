//! Numerical laboratory for heavy-tailed (Lévy) Wigner matrices.

extern crate openblas_src;

pub mod cone;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod io;
pub mod limitlaw;
pub mod linalg;
pub mod quad;
pub mod rde;
pub mod rng;
pub mod stable;
pub mod stats;

pub use error::{LabError, Result};
