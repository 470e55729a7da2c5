pub mod baselines;
pub mod cli;
pub mod data;
pub mod error;
pub mod fitting;
pub mod model;
pub mod numerics;
pub mod simulation;

pub use error::{Error, Result};
