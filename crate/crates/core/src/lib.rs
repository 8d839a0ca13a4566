//! Spectral solver for the Gauduchon Calabi-Yau equation on complex tori.

pub mod eigen_calculus;
pub mod error;
pub mod exterior;
pub mod gauduchon_ma;
pub mod grid_field;
pub mod hermitian_geometry;
pub mod krylov;
pub mod linalg;
pub mod solver;

pub use error::{Error, Result};
