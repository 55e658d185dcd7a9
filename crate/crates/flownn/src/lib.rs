//! File formats, experiment harness and command line for `flownn-core`.

pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod io;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod scenarios;
pub mod tracecsv;

pub use error::{Error, Result};
