//! Physics-biased prediction of per-millisecond network flow rates.
//!
//! This crate is `no_std` (it needs `alloc`) and holds everything that is pure
//! computation:
//!
//! - [`trace`]: flow telemetry, conservation checks, dataset splits and
//!   normalization.
//! - [`netsim`]: a fluid flow simulator with CUBIC-style congestion control
//!   and hop-by-hop FIFO forwarding.
//! - [`windowing`]: paired source/target windows from neighbouring-node rate
//!   differences.
//! - [`ndiff`]: a small reverse-mode autodiff engine with the layers the
//!   models need.
//! - [`flownn`]: the FlowNN model.
//! - [`baselines`]: Naive, ARIMA, per-node GRU and multivariate GRU.
//! - [`train`]: self-supervised pretraining, finetuning and metrics.
//!
//! File formats, the experiment harness and the command line live in the
//! `flownn` companion crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod error;
pub mod flownn;
pub mod ndiff;
pub mod netsim;
pub mod trace;
pub mod train;
pub mod windowing;

pub use error::{Error, Result};
