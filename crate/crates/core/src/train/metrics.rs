use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowMetric {
    pub flow_id: u32,
    pub mse: f64,
    pub count: usize,
}

/// Prediction quality. `rse` and `corr` are NaN and `degenerate` is set when
/// they are undefined (constant targets, or constant predictions for `corr`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mse: f64,
    pub rse: f64,
    pub corr: f64,
    pub count: usize,
    pub degenerate: bool,
    #[serde(default)]
    pub per_flow: Vec<FlowMetric>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub config_digest: String,
}

/// Mean squared error, relative squared error and Pearson correlation.
pub fn evaluate(y: &[f64], y_hat: &[f64]) -> Result<MetricReport> {
    if y.len() != y_hat.len() {
        return Err(Error::Validation(format!("{} targets vs {} predictions", y.len(), y_hat.len())));
    }
    if y.len() < 2 {
        return Err(Error::Validation("metrics need at least two points".into()));
    }
    let n = y.len() as f64;
    let y_bar = y.iter().sum::<f64>() / n;
    let p_bar = y_hat.iter().sum::<f64>() / n;
    let (mut sse, mut syy, mut spp, mut syp) = (0.0, 0.0, 0.0, 0.0);
    for (&a, &p) in y.iter().zip(y_hat) {
        sse += (a - p) * (a - p);
        syy += (a - y_bar) * (a - y_bar);
        spp += (p - p_bar) * (p - p_bar);
        syp += (a - y_bar) * (p - p_bar);
    }
    let rse = if syy > 0.0 { sse / syy } else { f64::NAN };
    let corr = if syy > 0.0 && spp > 0.0 {
        (syp / (libm::sqrt(syy) * libm::sqrt(spp))).clamp(-1.0, 1.0)
    } else {
        f64::NAN
    };
    Ok(MetricReport {
        mse: sse / n,
        rse,
        corr,
        count: y.len(),
        degenerate: rse.is_nan() || corr.is_nan(),
        per_flow: Vec::new(),
        seed: 0,
        config_digest: String::new(),
    })
}

/// [`evaluate`] plus a per-flow MSE breakdown; `flows[i]` labels point `i`.
pub fn evaluate_grouped(y: &[f64], y_hat: &[f64], flows: &[u32]) -> Result<MetricReport> {
    let mut r = evaluate(y, y_hat)?;
    if flows.len() != y.len() {
        return Err(Error::Validation(format!("{} flow labels for {} points", flows.len(), y.len())));
    }
    let mut acc: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for ((&a, &p), &f) in y.iter().zip(y_hat).zip(flows) {
        let e = acc.entry(f).or_insert((0.0, 0));
        e.0 += (a - p) * (a - p);
        e.1 += 1;
    }
    r.per_flow = acc
        .into_iter()
        .map(|(flow_id, (s, c))| FlowMetric {
            flow_id,
            mse: s / c as f64,
            count: c,
        })
        .collect();
    Ok(r)
}
