use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flownn::{WindowBatch, WindowSample};
use crate::ndiff::Tensor;
use crate::trace::{Feature, FlowTrace, NormStats};

/// How examples are cut from traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// Input history length in ms.
    pub window: usize,
    /// Targets average this many steps starting at the first unseen one.
    pub delta: usize,
    /// Spacing between consecutive target times.
    pub stride: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            window: 32,
            delta: 1,
            stride: 1,
        }
    }
}

/// One supervised window. Inputs cover `[target_ms - window, target_ms)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub flow_id: u32,
    pub target_ms: u64,
    pub sample: WindowSample,
    /// Normalized features at `target_ms`, `[node][feature]`.
    pub next: Vec<f64>,
    /// Normalized receive rate per node, averaged over the `delta` target steps.
    pub rate: Vec<f64>,
    /// Normalized destination delay, averaged the same way.
    pub delay: f64,
}

/// Cuts examples from the flows in `flow_ids` whose path length is
/// `path_len`. Every target step lies in `range`; history may reach back
/// before it but never before the trace start.
pub fn build_examples(
    traces: &[FlowTrace],
    stats: &NormStats,
    flow_ids: &[u32],
    range: Range<u64>,
    spec: &WindowSpec,
    path_len: usize,
) -> Result<Vec<Example>> {
    if spec.window < 2 || spec.delta == 0 || spec.stride == 0 {
        return Err(Error::Config(format!("invalid window spec {spec:?}")));
    }
    let f = Feature::COUNT;
    let mut out = Vec::new();
    for tr in traces.iter().filter(|t| flow_ids.contains(&t.flow_id) && t.path_len() == path_len) {
        let first = range.start.max(tr.start_ms + spec.window as u64);
        let end = range.end.min(tr.end_ms());
        let mut t = first;
        while t + spec.delta as u64 <= end {
            let o = (t - tr.start_ms) as usize;
            let h0 = o - spec.window;
            let mut values = Vec::with_capacity(spec.window * path_len * f);
            let mut raw = Vec::with_capacity(spec.window * path_len);
            for s in h0..o {
                for n in 0..path_len {
                    for feat in Feature::ALL {
                        values.push(stats.feature(feat).apply(tr.value(n, feat, s)));
                    }
                    raw.push(tr.value(n, Feature::RecvRate, s));
                }
            }
            let mut next = Vec::with_capacity(path_len * f);
            for n in 0..path_len {
                for feat in Feature::ALL {
                    next.push(stats.feature(feat).apply(tr.value(n, feat, o)));
                }
            }
            let recv = stats.feature(Feature::RecvRate);
            let rate = (0..path_len)
                .map(|n| (o..o + spec.delta).map(|s| recv.apply(tr.value(n, Feature::RecvRate, s))).sum::<f64>() / spec.delta as f64)
                .collect();
            let delay = (o..o + spec.delta).map(|s| stats.delay.apply(tr.delay_ms[s])).sum::<f64>() / spec.delta as f64;
            out.push(Example {
                flow_id: tr.flow_id,
                target_ms: t,
                sample: WindowSample {
                    steps: spec.window,
                    nodes: path_len,
                    features: f,
                    values,
                    raw_rate: raw,
                },
                next,
                rate,
                delay,
            });
            t += spec.stride as u64;
        }
    }
    Ok(out)
}

/// Where a batch row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub flow_id: u32,
    /// Exclusive end of the input history.
    pub input_end_ms: u64,
    pub target_ms: u64,
}

/// Model-ready batch: history windows, the features at the target step (for
/// the self-supervised target) and the task labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SslBatch {
    pub windows: WindowBatch,
    /// `(path_len * batch) x features`, row `n * batch + b`.
    pub next: Tensor,
    /// `batch x path_len`.
    pub rate: Tensor,
    /// `batch x 1`.
    pub delay: Tensor,
    pub provenance: Vec<Provenance>,
}

impl SslBatch {
    pub fn new(examples: &[&Example]) -> Result<Self> {
        let samples: Vec<&WindowSample> = examples.iter().map(|e| &e.sample).collect();
        let windows = WindowBatch::from_samples(&samples)?;
        let (b, l, f) = (windows.batch, windows.nodes, windows.features);
        let mut next = Tensor::zeros(l * b, f);
        let mut rate = Tensor::zeros(b, l);
        let mut delay = Tensor::zeros(b, 1);
        let mut provenance = Vec::with_capacity(b);
        for (i, e) in examples.iter().enumerate() {
            let p = Provenance {
                flow_id: e.flow_id,
                input_end_ms: e.target_ms,
                target_ms: e.target_ms,
            };
            // the step being predicted is never part of its own input
            if p.input_end_ms > p.target_ms || e.next.len() != l * f || e.rate.len() != l {
                return Err(Error::Validation(format!("example for flow {} at {} ms is malformed", e.flow_id, e.target_ms)));
            }
            for n in 0..l {
                next.row_mut(n * b + i).copy_from_slice(&e.next[n * f..(n + 1) * f]);
                rate.set(i, n, e.rate[n]);
            }
            delay.set(i, 0, e.delay);
            provenance.push(p);
        }
        Ok(Self {
            windows,
            next,
            rate,
            delay,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.provenance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.provenance.is_empty()
    }
}
