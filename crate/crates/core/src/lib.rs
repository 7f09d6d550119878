//! Finite-dimensional normed-space calculus.

pub mod amalgam;
pub mod calculus;
pub mod classes;
pub mod config;
pub mod dd;
pub mod distance;
pub mod envelope;
pub mod error;
pub mod linalg;
pub mod lp;
pub mod program;
pub mod report;
pub mod space;
pub mod witness;

pub use config::ToleranceConfig;
pub use error::{Error, Result};
pub use space::{Exponent, Mat, NormExpr, NormedSpace};
pub use witness::Witness;
