pub mod dynamics;
pub mod error;
pub mod function_space;
pub mod galerkin;
pub mod net;
pub mod spectral;
pub mod trainer;

pub use error::{Error, Result};
