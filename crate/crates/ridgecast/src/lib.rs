pub mod cli;
pub mod config;
pub mod data_io;
pub mod error;
pub mod harness;
pub mod model;
pub mod pca_baseline;
pub mod period;
pub mod reporting;
pub mod scoring;
pub mod svd_sampler;

pub use error::{Error, Result};
pub use period::{Period, PeriodRange};
