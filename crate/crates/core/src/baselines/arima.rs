use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// ARIMA(p, d, 0): an AR(p) model fitted by least squares on the `d`-times
/// differenced series. An intercept is fitted only when `d = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaParams {
    pub p: usize,
    pub d: usize,
    /// `phi_1..phi_p`, lag 1 first.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// The normal equations were singular and a ridge term was added.
    pub ridge: bool,
}

pub const RIDGE_LAMBDA: f64 = 1e-6;

fn difference(series: &[f64], d: usize) -> Vec<f64> {
    let mut y = series.to_vec();
    for _ in 0..d {
        y = y.windows(2).map(|w| w[1] - w[0]).collect();
    }
    y
}

/// Gaussian elimination with partial pivoting; `None` when a pivot is
/// negligible relative to the matrix scale.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

pub fn arima_fit(series: &[f64], p: usize, d: usize) -> Result<ArimaParams> {
    arima_fit_pooled(&[series], p, d)
}

/// One set of coefficients fitted jointly to several series (the regression
/// rows of all series are stacked).
pub fn arima_fit_pooled(series: &[&[f64]], p: usize, d: usize) -> Result<ArimaParams> {
    if d > 1 {
        return Err(Error::Config(format!("differencing order {d} not in {{0, 1}}")));
    }
    if series.is_empty() || series.iter().any(|s| s.len() <= p + d) {
        let shortest = series.iter().map(|s| s.len()).min().unwrap_or(0);
        return Err(Error::Validation(format!(
            "ARIMA({p},{d},0) needs more than {} observations per series, got {shortest}",
            p + d
        )));
    }
    if series.iter().flat_map(|s| s.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Validation("ARIMA input contains non-finite values".into()));
    }
    let with_intercept = d == 0;
    let k = p + usize::from(with_intercept);
    if k == 0 {
        return Ok(ArimaParams {
            p,
            d,
            coefficients: Vec::new(),
            intercept: 0.0,
            ridge: false,
        });
    }
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    let mut row = vec![0.0; k];
    for s in series {
        let y = difference(s, d);
        for t in p..y.len() {
            let mut c = 0;
            if with_intercept {
                row[0] = 1.0;
                c = 1;
            }
            for lag in 1..=p {
                row[c + lag - 1] = y[t - lag];
            }
            for i in 0..k {
                xty[i] += row[i] * y[t];
                for j in 0..k {
                    xtx[i][j] += row[i] * row[j];
                }
            }
        }
    }
    let (beta, ridge) = match solve(xtx.clone(), xty.clone()) {
        Some(b) => (b, false),
        None => {
            for (i, r) in xtx.iter_mut().enumerate() {
                r[i] += RIDGE_LAMBDA;
            }
            let b = solve(xtx, xty).ok_or_else(|| Error::Validation("ARIMA normal equations unsolvable".into()))?;
            (b, true)
        }
    };
    let (intercept, coefficients) = if with_intercept {
        (beta[0], beta[1..].to_vec())
    } else {
        (0.0, beta)
    };
    Ok(ArimaParams {
        p,
        d,
        coefficients,
        intercept,
        ridge,
    })
}

/// One-step forecast following `history`.
pub fn arima_predict(params: &ArimaParams, history: &[f64]) -> Result<f64> {
    let need = (params.p + params.d).max(1);
    if history.len() < need {
        return Err(Error::Validation(format!(
            "ARIMA forecast needs {need} past values, got {}",
            history.len()
        )));
    }
    let tail = &history[history.len() - (params.p + params.d).max(1)..];
    let y = difference(tail, params.d);
    let mut f = params.intercept;
    for (lag, phi) in params.coefficients.iter().enumerate() {
        f += phi * y[y.len() - 1 - lag];
    }
    Ok(if params.d == 1 { history[history.len() - 1] + f } else { f })
}

/// Forecasts `series[t]` from `series[..t]` for every `t` in `from..len`.
pub fn arima_forecast_series(params: &ArimaParams, series: &[f64], from: usize) -> Result<Vec<f64>> {
    (from..series.len()).map(|t| arima_predict(params, &series[..t])).collect()
}
