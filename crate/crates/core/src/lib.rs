//! Lindblad propagation and Krotov optimal control against mixed-state targets.

pub mod error;
pub mod functionals;
pub mod krotov;
pub mod models;
pub mod propagation;
pub mod quantum;
mod sparse;

pub use error::{Error, Result};
