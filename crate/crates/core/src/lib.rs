//! Spatially distributed coevolutionary GAN training on 2-D synthetic data.

pub mod coevolution;
pub mod data;
pub mod error;
pub mod grid;
pub mod harness;
pub mod metrics;
pub mod mixture;
pub mod nn;
pub mod objectives;

pub use error::{Error, Result};
