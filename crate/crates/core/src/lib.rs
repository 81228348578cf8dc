pub mod cli;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod fsutil;
pub mod infer;
pub mod model;
pub mod morphometry;
pub mod synthgen;
pub mod train;

pub use error::{Error, Result};
