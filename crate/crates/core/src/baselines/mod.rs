//! Reference predictors: last value, autoregressive ARIMA, a GRU shared
//! across nodes that sees one node at a time, and a GRU over the whole path.

mod arima;
mod neural;

pub use arima::{arima_fit, arima_fit_pooled, arima_forecast_series, arima_predict, ArimaParams, RIDGE_LAMBDA};
pub use neural::{BaselineConfig, GruBaseline, MGru};

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Predicts `x[t+1] = x[t]`; the result has one entry per `t = 1..len`.
pub fn naive_predict(series: &[f64]) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::Validation("naive_predict needs a non-empty series".into()));
    }
    Ok(series[..series.len() - 1].to_vec())
}
