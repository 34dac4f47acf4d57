pub mod baseline;
pub mod config;
pub mod error;
pub mod io;
pub mod krnet;
pub mod metrics;
pub mod pipeline;
pub mod sar;
pub mod signal;
pub mod training;

pub use error::{Error, Result};
