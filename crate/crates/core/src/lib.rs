//! Weyl–Titchmarsh analysis of linear Hamiltonian nabla systems on Sturmian time scales.

pub mod cli;
pub mod error;
pub mod expr;
pub mod field;
pub mod linalg;
pub mod propagate;
pub mod regular;
pub mod rk;
pub mod system;
pub mod timescale;
pub mod weyl;

pub use error::{Error, Result};
