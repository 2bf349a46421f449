//! Simulator for quench dynamics of all-to-all coupled qubit arrays.

pub mod calib;
pub mod cli;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod measure;
pub mod model;
pub mod observables;

pub use error::{Error, Result};
