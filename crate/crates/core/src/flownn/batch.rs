use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::ndiff::Tensor;
use crate::windowing::{split, Role, WindowPairing};

/// One input window: `steps` time steps of `nodes x features` normalized
/// values plus the raw rate series used to form window pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub steps: usize,
    pub nodes: usize,
    pub features: usize,
    /// Row-major `[step][node][feature]`.
    pub values: Vec<f64>,
    /// Row-major `[step][node]`, de-normalized.
    pub raw_rate: Vec<f64>,
}

impl WindowSample {
    pub fn value(&self, step: usize, node: usize, feature: usize) -> f64 {
        self.values[(step * self.nodes + node) * self.features + feature]
    }

    pub fn raw(&self, step: usize, node: usize) -> f64 {
        self.raw_rate[step * self.nodes + node]
    }

    /// `split` over the rate difference of nodes `pair` and `pair + 1`.
    pub fn pairing(&self, pair: usize) -> WindowPairing {
        let diff: Vec<f64> = (0..self.steps).map(|t| self.raw(t, pair) - self.raw(t, pair + 1)).collect();
        split(&diff)
    }
}

/// Per-step row masks of one node pair across a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMasks {
    /// Row is in a source window.
    pub source: Vec<bool>,
    /// Row starts a new pair (encoder state resets).
    pub opens: Vec<bool>,
    /// Row is the first target step of its pair (decoder starts from the
    /// encoder state).
    pub first_target: Vec<bool>,
}

impl StepMasks {
    pub fn any_source(&self) -> bool {
        self.source.iter().any(|&s| s)
    }

    pub fn any_target(&self) -> bool {
        self.source.iter().any(|&s| !s)
    }
}

/// A batch of windows laid out for the model.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    pub batch: usize,
    pub steps: usize,
    pub nodes: usize,
    pub features: usize,
    /// `(steps * nodes * batch) x features`; row `(t * nodes + n) * batch + b`.
    pub inputs: Tensor,
    /// `[pair][sample]`.
    pub pairings: Vec<Vec<WindowPairing>>,
    /// `[pair][step]`.
    pub masks: Vec<Vec<StepMasks>>,
}

fn check_cover(p: &WindowPairing, steps: usize) -> Result<()> {
    let mut at = 0;
    for pair in &p.pairs {
        let span = pair.span();
        if span.start != at || span.is_empty() {
            return Err(shape_err("induction", format!("pairing has a gap or overlap at index {at}")));
        }
        at = span.end;
    }
    if at != steps {
        return Err(shape_err("induction", format!("pairing covers {at} of {steps} steps")));
    }
    Ok(())
}

impl WindowBatch {
    pub fn from_samples(samples: &[&WindowSample]) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(shape_err("window batch", "no samples"));
        };
        let (steps, nodes, features) = (first.steps, first.nodes, first.features);
        for s in samples {
            if (s.steps, s.nodes, s.features) != (steps, nodes, features)
                || s.values.len() != steps * nodes * features
                || s.raw_rate.len() != steps * nodes
            {
                return Err(shape_err("window batch", "samples disagree in shape"));
            }
        }
        let pairings = (0..nodes.saturating_sub(1))
            .map(|n| samples.iter().map(|s| s.pairing(n)).collect())
            .collect();
        let batch = samples.len();
        let mut inputs = Tensor::zeros(steps * nodes * batch, features);
        for t in 0..steps {
            for n in 0..nodes {
                for (b, s) in samples.iter().enumerate() {
                    let off = (t * nodes + n) * features;
                    inputs.row_mut((t * nodes + n) * batch + b).copy_from_slice(&s.values[off..off + features]);
                }
            }
        }
        Self::new(batch, steps, nodes, inputs, pairings)
    }

    pub fn new(batch: usize, steps: usize, nodes: usize, inputs: Tensor, pairings: Vec<Vec<WindowPairing>>) -> Result<Self> {
        if inputs.rows() != steps * nodes * batch {
            return Err(shape_err("window batch", format!("{} input rows for {steps}x{nodes}x{batch}", inputs.rows())));
        }
        if pairings.len() != nodes.saturating_sub(1) || pairings.iter().any(|p| p.len() != batch) {
            return Err(shape_err("window batch", "need one pairing per node pair and sample"));
        }
        let mut masks = Vec::with_capacity(pairings.len());
        for per_pair in &pairings {
            let mut steps_masks: Vec<StepMasks> = (0..steps)
                .map(|_| StepMasks {
                    source: vec![false; batch],
                    opens: vec![false; batch],
                    first_target: vec![false; batch],
                })
                .collect();
            for (b, p) in per_pair.iter().enumerate() {
                check_cover(p, steps)?;
                let roles = p.roles();
                for (t, &(role, opens)) in roles.iter().enumerate() {
                    let m = &mut steps_masks[t];
                    m.source[b] = role == Role::Source;
                    m.opens[b] = opens;
                    m.first_target[b] = role == Role::Target && (opens || roles[t - 1].0 == Role::Source);
                }
            }
            masks.push(steps_masks);
        }
        Ok(Self {
            batch,
            steps,
            nodes,
            features: inputs.cols(),
            inputs,
            pairings,
            masks,
        })
    }
}
