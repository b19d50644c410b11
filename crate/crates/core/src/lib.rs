pub mod benchmarks;
pub mod checks;
pub mod cli;
pub mod config;
pub mod error;
pub mod optimizer;
pub mod regression;
pub mod reservoir;
pub mod rng;
pub mod signals;

pub use error::{Error, Result};
