//! Gradient-based topology optimization on regular honeycomb meshes using
//! negative/positive elliptical masks, with explicit minimum and maximum
//! length scales imposed through hex-grid skeletonization and a two-stage
//! sequence-of-length-scales driver.

pub mod config;
pub mod error;
pub mod fem;
pub mod grid;
pub mod io;
pub mod lengthscale;
pub mod mask;
pub mod optimizer;
pub mod pipeline;
pub mod postproc;
pub mod render;
pub mod skeleton;
pub mod sls;
pub mod truss;

pub use error::{Error, Result};
