//! Finite-element Steklov spectral toolkit for the penalized curl-curl
//! operator with tangential boundary conditions.

pub mod assembly;
pub mod calderon;
pub mod deflation;
mod error;
pub mod linalg;
pub mod mesh;
pub mod spectral;

pub use error::{Error, Result};
