pub mod baselines;
pub mod chinfit;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod imageio;
pub mod preprocess;
pub mod rng;

pub use error::{Error, Result};
pub mod metrics;
pub mod nnet;

mod container;
