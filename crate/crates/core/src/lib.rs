pub mod controller;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod model;
pub mod numerics;
pub mod sensors;
pub mod validate;

pub use error::{Error, Result};
