pub mod data;
pub mod error;
pub mod forest;
pub mod pipeline;
pub mod prob;
pub mod ranking;
mod rng;
pub mod sim;
pub mod solver;
pub mod train;

pub use error::{Error, Result};
