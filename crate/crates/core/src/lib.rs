//! Numerical laboratory for the Calderón inverse conductivity problem on a cube.
//!
//! Forward Dirichlet-to-Neumann maps, complex geometric optics solutions built with a
//! periodic Fourier solver, the Liouville reduction from conductivity to Schrödinger form,
//! the boundary pairing identity and a Fourier-sampling reconstruction, and numerical
//! checks of the Carleman and directional Poincaré inequalities.

pub mod carleman;
pub mod cgo;
pub mod error;
pub mod field;
pub mod forward;
pub mod geometry;
pub mod identity;
pub mod io;
pub mod linalg;
pub mod liouville;
pub mod rng;

pub use error::{CalError, Result};
pub use field::{BoundaryField, ScalarField};
pub use geometry::{Frame, Grid};
pub use num_complex::Complex64 as C64;
