pub mod combinatorics;
pub mod error;
pub mod quadrature;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub mod torus;
pub mod wavevector;
pub mod spectrum;
pub mod limit_laws;
pub mod weyl;
pub mod acceptance;
