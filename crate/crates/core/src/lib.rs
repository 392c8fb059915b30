//! Forecasting pipeline for acid-mine-drainage water-quality monitoring.

pub mod error;
pub mod ingest;
pub mod mathcore;
pub mod seed;
pub mod stattests;
pub mod anomaly;
pub mod treereg;
pub mod metrics;
pub mod nn;
pub mod forecast;
pub mod synth;
pub mod config;
pub mod pipeline;

pub use error::{Error, Result};
