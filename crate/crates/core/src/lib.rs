pub mod body;
pub mod error;

pub use error::{Error, Result};
pub mod diffusion;
pub mod rng;
pub mod net;
pub mod data;
pub mod animator;
pub mod generator;
pub mod metrics;
pub mod config;
pub mod cli;
