//! Random numbers, symmetric eigenvalues and power-law fitting.

mod eigen;
mod fit;
mod rng;

pub use eigen::{check_symmetric, sym_eigen, sym_eigvals, Spectrum, EIGEN_FLOOR_REL, SYMMETRY_TOL};
pub use fit::{powerlaw_fit, FitRange};
pub use rng::Rng;
