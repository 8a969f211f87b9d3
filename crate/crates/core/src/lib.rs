//! Numerical laboratory for the cyclic solid-on-solid model: elliptic
//! functions, the dynamical six-vertex algebra on a finite lattice, Bethe
//! ground states, determinant formulas for matrix elements, and the
//! thermodynamic limit of local height probabilities.

pub mod bethe;
pub mod elliptic;
pub mod error;
pub mod lattice;
pub mod linalg;
pub mod matel;
pub mod scalar;
pub mod thermo;

pub use elliptic::ModelParams;
pub use error::{Error, Result};
pub use num_complex::Complex64;
