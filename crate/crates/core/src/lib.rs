//! Semi-Lagrangian multiscale reconstruction (SLMsR) for advection-dominated
//! advection-diffusion equations on the periodic unit interval and torus.

pub mod analysis;
pub mod error;
pub mod fem;
pub mod fields;
pub mod mesh;
pub mod propagate;
pub mod reconstruct;
pub mod semilag;
pub mod solver;
pub mod study;

pub use error::{Error, Result};
