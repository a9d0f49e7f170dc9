//! File formats, configuration, reports, the benchmark grid and the CLI
//! around `trajaudit-core`.

pub mod bench;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod report;

pub use error::{Error, Result};
pub use trajaudit_core as core;
