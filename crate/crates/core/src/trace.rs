//! Flow telemetry records, conservation checks, dataset assembly and
//! normalization.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longest routing path handled anywhere in the crate.
pub const MAX_PATH_LEN: usize = 7;

/// Per-node features in tensor order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    /// Bits per second the node transmits for this flow.
    SendRate = 0,
    /// Bits per second arriving at the node for this flow.
    RecvRate = 1,
    /// Aggregate send rate of all other flows at the node.
    BgRate = 2,
}

impl Feature {
    pub const ALL: [Feature; 3] = [Feature::SendRate, Feature::RecvRate, Feature::BgRate];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }
}

/// One node's per-millisecond series.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeSeries {
    pub send_rate: Vec<f64>,
    pub recv_rate: Vec<f64>,
    pub bg_rate: Vec<f64>,
}

impl NodeSeries {
    pub fn zeros(len: usize) -> Self {
        Self {
            send_rate: vec![0.0; len],
            recv_rate: vec![0.0; len],
            bg_rate: vec![0.0; len],
        }
    }

    pub fn feature(&self, f: Feature) -> &[f64] {
        match f {
            Feature::SendRate => &self.send_rate,
            Feature::RecvRate => &self.recv_rate,
            Feature::BgRate => &self.bg_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.send_rate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.send_rate.is_empty()
    }
}

/// Telemetry of one flow along its routing path, sampled every millisecond
/// over `[start_ms, start_ms + len)`.
///
/// `delay_ms` is the mean end-to-end delay of bits delivered at the
/// destination during each millisecond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrace {
    pub flow_id: u32,
    pub path: Vec<String>,
    pub start_ms: u64,
    pub nodes: Vec<NodeSeries>,
    pub delay_ms: Vec<f64>,
}

impl FlowTrace {
    /// Checks shape and value invariants.
    pub fn new(flow_id: u32, path: Vec<String>, start_ms: u64, nodes: Vec<NodeSeries>, delay_ms: Vec<f64>) -> Result<Self> {
        let t = Self {
            flow_id,
            path,
            start_ms,
            nodes,
            delay_ms,
        };
        t.check()?;
        Ok(t)
    }

    fn check(&self) -> Result<()> {
        let id = self.flow_id;
        if self.path.is_empty() || self.path.len() > MAX_PATH_LEN {
            return Err(Error::Validation(format!(
                "flow {id}: path length {} outside [1, {MAX_PATH_LEN}]",
                self.path.len()
            )));
        }
        if self.nodes.len() != self.path.len() {
            return Err(Error::Validation(format!(
                "flow {id}: {} node series for a path of {}",
                self.nodes.len(),
                self.path.len()
            )));
        }
        let len = self.delay_ms.len();
        for (n, node) in self.nodes.iter().enumerate() {
            for f in Feature::ALL {
                let s = node.feature(f);
                if s.len() != len {
                    return Err(Error::Validation(format!(
                        "flow {id} node {n}: {f:?} has {} samples, expected {len}",
                        s.len()
                    )));
                }
                if let Some(t) = s.iter().position(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::Validation(format!(
                        "flow {id} node {n}: {f:?} at t={} is {}",
                        self.start_ms + t as u64,
                        s[t]
                    )));
                }
            }
        }
        if let Some(t) = self.delay_ms.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation(format!(
                "flow {id}: delay at t={} is {}",
                self.start_ms + t as u64,
                self.delay_ms[t]
            )));
        }
        Ok(())
    }

    pub fn path_len(&self) -> usize {
        self.path.len()
    }

    pub fn len(&self) -> usize {
        self.delay_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delay_ms.is_empty()
    }

    /// Exclusive end of the sampled range.
    pub fn end_ms(&self) -> u64 {
        self.start_ms + self.len() as u64
    }

    pub fn value(&self, node: usize, f: Feature, offset: usize) -> f64 {
        self.nodes[node].feature(f)[offset]
    }

    /// Feature tensor over sample offsets `range`.
    pub fn tensor(&self, range: Range<usize>) -> Result<TimeSeriesTensor> {
        if range.end > self.len() || range.start > range.end {
            return Err(Error::Validation(format!(
                "flow {}: window {range:?} outside [0, {})",
                self.flow_id,
                self.len()
            )));
        }
        let l = self.path_len();
        let mut values = Vec::with_capacity(range.len() * l * Feature::COUNT);
        for t in range.clone() {
            for n in 0..l {
                for f in Feature::ALL {
                    values.push(self.value(n, f, t));
                }
            }
        }
        Ok(TimeSeriesTensor {
            path_len: l,
            features: Feature::COUNT,
            steps: range.len(),
            values,
        })
    }
}

/// `steps x path_len x features` window, time-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesTensor {
    pub path_len: usize,
    pub features: usize,
    pub steps: usize,
    pub values: Vec<f64>,
}

impl TimeSeriesTensor {
    pub fn get(&self, step: usize, node: usize, feature: usize) -> f64 {
        self.values[(step * self.path_len + node) * self.features + feature]
    }

    /// The `path_len x features` slice at one step.
    pub fn step(&self, step: usize) -> &[f64] {
        let w = self.path_len * self.features;
        &self.values[step * w..(step + 1) * w]
    }
}

/// Relative imbalance between one node's transmitted bits and the next
/// node's received bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairBalance {
    pub upstream: usize,
    pub downstream: usize,
    pub sent: f64,
    pub received: f64,
    pub imbalance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub flow_id: u32,
    pub pairs: Vec<PairBalance>,
}

impl ConservationReport {
    pub fn max_imbalance(&self) -> f64 {
        self.pairs.iter().map(|p| p.imbalance).fold(0.0, f64::max)
    }
}

/// Per adjacent pair `(n, n+1)`: `|sum send_n - sum recv_{n+1}| / sum send_n`,
/// with `0/0` read as balanced.
pub fn conservation_report(trace: &FlowTrace) -> ConservationReport {
    let pairs = (0..trace.path_len().saturating_sub(1))
        .map(|n| {
            let sent: f64 = trace.nodes[n].send_rate.iter().sum();
            let received: f64 = trace.nodes[n + 1].recv_rate.iter().sum();
            let diff = (sent - received).abs();
            let imbalance = if diff == 0.0 { 0.0 } else { diff / sent };
            PairBalance {
                upstream: n,
                downstream: n + 1,
                sent,
                received,
                imbalance,
            }
        })
        .collect();
    ConservationReport {
        flow_id: trace.flow_id,
        pairs,
    }
}

/// Conservation check; fails on the first pair above `tolerance`.
pub fn validate_trace(trace: &FlowTrace, tolerance: f64) -> Result<ConservationReport> {
    let report = conservation_report(trace);
    if let Some(bad) = report.pairs.iter().find(|p| !(p.imbalance <= tolerance)) {
        return Err(Error::Conservation {
            upstream: bad.upstream,
            downstream: bad.downstream,
            imbalance: bad.imbalance,
            tolerance,
        });
    }
    Ok(report)
}

/// Z-score parameters of one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: f64,
    pub std: f64,
    /// Zero variance: values are centred but not scaled.
    pub degenerate: bool,
}

impl FeatureStats {
    /// Population mean and standard deviation.
    pub fn fit<'a>(values: impl IntoIterator<Item = &'a f64>) -> Self {
        let mut n = 0usize;
        let mut sum = 0.0;
        let vals: Vec<f64> = values.into_iter().copied().collect();
        for v in &vals {
            sum += v;
            n += 1;
        }
        if n == 0 {
            return Self {
                mean: 0.0,
                std: 0.0,
                degenerate: true,
            };
        }
        let mean = sum / n as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = libm::sqrt(var);
        Self {
            mean,
            std,
            degenerate: !(std > 0.0),
        }
    }

    fn scale(&self) -> f64 {
        if self.degenerate {
            1.0
        } else {
            self.std
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.scale()
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.scale() + self.mean
    }

    pub fn normalize(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&x| self.apply(x)).collect()
    }

    pub fn denormalize(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&z| self.invert(z)).collect()
    }
}

/// Global per-feature statistics (all nodes pooled) plus the delay label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub features: Vec<FeatureStats>,
    pub delay: FeatureStats,
}

impl NormStats {
    pub fn feature(&self, f: Feature) -> &FeatureStats {
        &self.features[f.index()]
    }
}

/// Time ranges (absolute ms) and flow partition of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub ratio: [u32; 3],
    pub train: Range<u64>,
    pub val: Range<u64>,
    pub test: Range<u64>,
    pub seen_flow_ids: Vec<u32>,
    pub unseen_flow_ids: Vec<u32>,
    pub stats: NormStats,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn is_unseen(&self, flow_id: u32) -> bool {
        self.unseen_flow_ids.contains(&flow_id)
    }
}

/// Splits the shared time axis by `ratio` and holds out the last `n_unseen`
/// flows of a seeded shuffle. Normalization statistics come from the train
/// range of seen flows only.
pub fn build_dataset(traces: &[FlowTrace], ratio: [u32; 3], n_unseen: usize, seed: u64) -> Result<DatasetSplit> {
    if traces.len() < n_unseen + 1 {
        return Err(Error::Config(format!(
            "{} flows cannot hold out {n_unseen} unseen flows and keep one for training",
            traces.len()
        )));
    }
    let first = &traces[0];
    if let Some(t) = traces
        .iter()
        .find(|t| t.start_ms != first.start_ms || t.len() != first.len())
    {
        return Err(Error::Config(format!(
            "flow {} covers [{}, {}) but flow {} covers [{}, {})",
            t.flow_id,
            t.start_ms,
            t.end_ms(),
            first.flow_id,
            first.start_ms,
            first.end_ms()
        )));
    }
    let total: u64 = ratio.iter().map(|&r| r as u64).sum();
    if total == 0 {
        return Err(Error::Config("split ratio sums to zero".into()));
    }
    let len = first.len() as u64;
    let train_end = len * ratio[0] as u64 / total;
    let val_end = len * (ratio[0] + ratio[1]) as u64 / total;
    if train_end == 0 || val_end == train_end || val_end == len {
        return Err(Error::Config(format!(
            "{len} ms is too short for a {}:{}:{} split",
            ratio[0], ratio[1], ratio[2]
        )));
    }
    let s = first.start_ms;

    let mut ids: Vec<u32> = traces.iter().map(|t| t.flow_id).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ids.len() - n_unseen;
    let mut seen = ids[..cut].to_vec();
    let mut unseen = ids[cut..].to_vec();
    seen.sort_unstable();
    unseen.sort_unstable();

    let seen_traces: Vec<&FlowTrace> = traces.iter().filter(|t| seen.binary_search(&t.flow_id).is_ok()).collect();
    let te = train_end as usize;
    let features = Feature::ALL
        .iter()
        .map(|&f| {
            FeatureStats::fit(
                seen_traces
                    .iter()
                    .flat_map(|t| t.nodes.iter().flat_map(move |n| &n.feature(f)[..te])),
            )
        })
        .collect();
    let delay = FeatureStats::fit(seen_traces.iter().flat_map(|t| &t.delay_ms[..te]));

    Ok(DatasetSplit {
        ratio,
        train: s..s + train_end,
        val: s + train_end..s + val_end,
        test: s + val_end..s + len,
        seen_flow_ids: seen,
        unseen_flow_ids: unseen,
        stats: NormStats { features, delay },
        seed,
    })
}

/// `out[t] = mean(series[t+1..=t+delta])`, so the output is `delta` shorter.
pub fn multi_step_targets(series: &[f64], delta: usize) -> Result<Vec<f64>> {
    if delta == 0 {
        return Err(Error::Config("multi-step horizon must be at least 1".into()));
    }
    if delta >= series.len() {
        return Err(Error::Config(format!(
            "horizon {delta} leaves no targets in a series of {}",
            series.len()
        )));
    }
    Ok((0..series.len() - delta)
        .map(|t| series[t + 1..=t + delta].iter().sum::<f64>() / delta as f64)
        .collect())
}
