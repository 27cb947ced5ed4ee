pub mod distributions;
pub mod adaptation;
pub mod cli;
pub mod error;
pub mod init;
pub mod metrics;
pub mod model;
pub mod netdata;
pub mod postprocess;
pub mod sampler;
pub mod simulate;

pub use error::{Error, Result};
