use alloc::vec::Vec;
use core::ops::Range;

use super::data::Example;
use crate::baselines::{arima_fit_pooled, arima_predict, ArimaParams};
use crate::error::Result;
use crate::trace::{Feature, FlowTrace, NormStats};

fn recv_history(e: &Example, node: usize) -> Vec<f64> {
    (0..e.sample.steps)
        .map(|t| e.sample.value(t, node, Feature::RecvRate.index()))
        .collect()
}

/// Last observed normalized receive rate of every node.
pub fn naive_rate(examples: &[Example]) -> Vec<f64> {
    examples
        .iter()
        .flat_map(|e| (0..e.sample.nodes).map(move |n| e.sample.value(e.sample.steps - 1, n, Feature::RecvRate.index())))
        .collect()
}

/// One ARIMA model for the normalized receive rate, pooled over every node
/// of the given flows inside `range`.
pub fn fit_arima_rate(
    traces: &[FlowTrace],
    stats: &NormStats,
    flow_ids: &[u32],
    range: Range<u64>,
    p: usize,
    d: usize,
) -> Result<ArimaParams> {
    let recv = stats.feature(Feature::RecvRate);
    let mut series: Vec<Vec<f64>> = Vec::new();
    for t in traces.iter().filter(|t| flow_ids.contains(&t.flow_id)) {
        let a = range.start.max(t.start_ms).saturating_sub(t.start_ms) as usize;
        let b = (range.end.min(t.end_ms()).saturating_sub(t.start_ms) as usize).max(a);
        for n in &t.nodes {
            series.push(recv.normalize(&n.recv_rate[a..b]));
        }
    }
    let refs: Vec<&[f64]> = series.iter().map(|s| s.as_slice()).collect();
    arima_fit_pooled(&refs, p, d)
}

/// One-step ARIMA forecasts from each example's own history window.
pub fn arima_rate(params: &ArimaParams, examples: &[Example]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(examples.len() * examples.first().map_or(0, |e| e.sample.nodes));
    for e in examples {
        for n in 0..e.sample.nodes {
            out.push(arima_predict(params, &recv_history(e, n))?);
        }
    }
    Ok(out)
}
