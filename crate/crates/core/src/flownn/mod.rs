//! FlowNN: per-node embedding, a path aggregator that rolls the whole path
//! through time, and an induction layer that carries each node's state into
//! its successor over paired source/target windows. Aggregation and induction
//! are repeated `iterations` times with shared weights.

mod batch;

pub use batch::{StepMasks, WindowBatch, WindowSample};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::ndiff::{Activation, Graph, GruCell, Mlp, ParamStore, Partition, Seq2Seq, Var};

/// Which state conditions the induction of node `n + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// The freshly updated state of node `n`.
    #[default]
    Predecessor,
    /// The path aggregator output, for every pair.
    PathState,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub path_len: usize,
    pub features: usize,
    pub hidden: usize,
    pub iterations: usize,
    pub window: usize,
    #[serde(default)]
    pub conditioning: Conditioning,
    /// When false every node state is replaced by the path state (ablation).
    #[serde(default = "yes")]
    pub induction: bool,
}

impl ModelConfig {
    pub fn new(path_len: usize, hidden: usize, iterations: usize, window: usize) -> Self {
        Self {
            path_len,
            features: crate::trace::Feature::COUNT,
            hidden,
            iterations,
            window,
            conditioning: Conditioning::Predecessor,
            induction: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.path_len < 2 {
            return Err(Error::Config(format!("path_len {} leaves no node pair", self.path_len)));
        }
        if self.features == 0 || self.hidden == 0 {
            return Err(Error::Config("features and hidden must be positive".into()));
        }
        if !(1..=5).contains(&self.iterations) {
            return Err(Error::Config(format!("iterations {} outside 1..=5", self.iterations)));
        }
        if self.window < 2 {
            return Err(Error::Config(format!("window {} shorter than 2", self.window)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FlowOutput {
    /// Predicted state of every node at the step after the window, `batch x hidden` each.
    pub nodes: Vec<Var>,
    /// Path aggregator state at the last step of the final iteration.
    pub path: Var,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowNN {
    pub config: ModelConfig,
    /// Pointwise embedding, shared over nodes and steps.
    pub embed: Mlp,
    /// Merges the concatenated node states of one step.
    pub merge: Mlp,
    pub path_gru: GruCell,
    /// Source-window update from `[predecessor, own]` states.
    pub pair_mlp: Mlp,
    /// Target-window update.
    pub seq2seq: Seq2Seq,
}

/// `select_rows` that skips the copy when the mask is uniform.
fn select(g: &mut Graph, mask: &[bool], a: Var, b: Var) -> Result<Var> {
    if mask.iter().all(|&m| m) {
        Ok(a)
    } else if mask.iter().all(|&m| !m) {
        Ok(b)
    } else {
        g.select_rows(mask, a, b)
    }
}

fn split_rows(g: &mut Graph, x: Var, blocks: usize) -> Result<Vec<Var>> {
    let rows = g.shape(x)[0] / blocks;
    (0..blocks).map(|i| g.slice_rows(x, i * rows, rows)).collect()
}

/// Splits the row blocks of `x` back to the step positions in `at`.
fn scatter(g: &mut Graph, x: Var, at: &[usize], steps: usize) -> Result<Vec<Option<Var>>> {
    let mut out = vec![None; steps];
    for (&t, v) in at.iter().zip(split_rows(g, x, at.len())?) {
        out[t] = Some(v);
    }
    Ok(out)
}

impl FlowNN {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (f, d, l) = (config.features, config.hidden, config.path_len);
        let theta = Partition::PredictorTheta;
        Ok(Self {
            config,
            embed: Mlp::new(store, "embed", Partition::EncoderEta, &[f, d, d], Activation::Tanh, rng)?,
            merge: Mlp::new(store, "path.merge", theta, &[l * d, d, d], Activation::Tanh, rng)?,
            path_gru: GruCell::new(store, "path.gru", theta, d, d, rng)?,
            pair_mlp: Mlp::new(store, "induction.mlp", theta, &[2 * d, d, d], Activation::Tanh, rng)?,
            seq2seq: Seq2Seq::new(store, "induction.seq2seq", theta, d, d, d, rng)?,
        })
    }

    fn check_batch(&self, batch: &WindowBatch) -> Result<()> {
        let c = &self.config;
        if batch.nodes != c.path_len || batch.features != c.features {
            return Err(shape_err(
                "flownn",
                format!(
                    "batch has {} nodes x {} features, model expects {} x {}",
                    batch.nodes, batch.features, c.path_len, c.features
                ),
            ));
        }
        if batch.steps < 2 {
            return Err(shape_err("flownn", "window shorter than 2"));
        }
        Ok(())
    }

    /// Embeds every `(step, node)` input; returns `[node][step]`.
    pub fn embed_states(&self, g: &mut Graph, store: &ParamStore, batch: &WindowBatch) -> Result<Vec<Vec<Var>>> {
        self.check_batch(batch)?;
        let x = g.constant(batch.inputs.clone());
        self.embed_input(g, store, batch, x)
    }

    /// As [`FlowNN::embed_states`] for an input already on the graph.
    pub fn embed_input(&self, g: &mut Graph, store: &ParamStore, batch: &WindowBatch, x: Var) -> Result<Vec<Vec<Var>>> {
        let h = self.embed.forward(g, store, x)?;
        let blocks = split_rows(g, h, batch.steps * batch.nodes)?;
        Ok((0..batch.nodes)
            .map(|n| (0..batch.steps).map(|t| blocks[t * batch.nodes + n]).collect())
            .collect())
    }

    /// Node-merge MLP per step followed by a GRU across steps. `states` is
    /// `[node][step]`; returns the aggregated state per step.
    pub fn path_aggregate(&self, g: &mut Graph, store: &ParamStore, states: &[Vec<Var>]) -> Result<Vec<Var>> {
        if states.len() != self.config.path_len {
            return Err(shape_err(
                "path aggregator",
                format!("{} node state sequences, path has {}", states.len(), self.config.path_len),
            ));
        }
        let steps = states[0].len();
        if steps == 0 || states.iter().any(|s| s.len() != steps) {
            return Err(shape_err("path aggregator", "node state sequences differ in length or are empty"));
        }
        let rows = g.shape(states[0][0])[0];
        let per_step = (0..steps)
            .map(|t| {
                let nodes: Vec<Var> = states.iter().map(|s| s[t]).collect();
                g.concat_cols(&nodes)
            })
            .collect::<Result<Vec<_>>>()?;
        let stacked = g.concat_rows(&per_step)?;
        let merged = self.merge.forward(g, store, stacked)?;
        let projected = self.path_gru.project_input(g, store, merged)?;
        let xs = split_rows(g, projected, steps)?;
        let mut h = g.zeros(rows, self.config.hidden);
        let mut out = Vec::with_capacity(steps);
        for xw in xs {
            h = self.path_gru.step_projected(g, store, xw, h)?;
            out.push(h);
        }
        Ok(out)
    }

    /// Updates node `n + 1` from predecessor states `pred` and its own
    /// current states `own` under the window masks of the pair. Source steps
    /// go through the pair MLP; each target run is decoded by the seq2seq
    /// model whose encoder read the predecessor states of the preceding
    /// source run. Outputs stand one step ahead of the inputs at the same
    /// position, so the decoder input at a position is the node's own state
    /// there.
    pub fn induction(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        masks: &[StepMasks],
        pred: &[Var],
        own: &[Var],
    ) -> Result<Vec<Var>> {
        let steps = masks.len();
        if pred.len() != steps || own.len() != steps {
            return Err(shape_err(
                "induction",
                format!("{} masks, {} predecessor and {} own states", steps, pred.len(), own.len()),
            ));
        }
        let rows = g.shape(pred[0])[0];
        let d = self.config.hidden;
        let zeros = g.zeros(rows, d);

        // Everything that reads only `pred` or `own` runs as one matmul over
        // the steps that need it; rows are computed exactly as step by step.
        let src: Vec<usize> = (0..steps).filter(|&t| masks[t].any_source()).collect();
        let tgt: Vec<usize> = (0..steps).filter(|&t| masks[t].any_target()).collect();
        let (enc_x, pair_y) = if src.is_empty() {
            (vec![None; steps], vec![None; steps])
        } else {
            let p = g.concat_rows(&src.iter().map(|&t| pred[t]).collect::<Vec<_>>())?;
            let o = g.concat_rows(&src.iter().map(|&t| own[t]).collect::<Vec<_>>())?;
            let enc_x = self.seq2seq.encoder.project_input(g, store, p)?;
            let x = g.concat_cols(&[p, o])?;
            let pair_y = self.pair_mlp.forward(g, store, x)?;
            (scatter(g, enc_x, &src, steps)?, scatter(g, pair_y, &src, steps)?)
        };
        let dec_x = if tgt.is_empty() {
            vec![None; steps]
        } else {
            let o = g.concat_rows(&tgt.iter().map(|&t| own[t]).collect::<Vec<_>>())?;
            let dec_x = self.seq2seq.decoder.project_input(g, store, o)?;
            scatter(g, dec_x, &tgt, steps)?
        };

        let mut enc = zeros;
        let mut dec = zeros;
        let mut out = Vec::with_capacity(steps);
        for (t, m) in masks.iter().enumerate() {
            let enc_in = select(g, &m.opens, zeros, enc)?;
            let mut value = dec;
            let pair_out = pair_y[t];
            if let Some(xw) = enc_x[t] {
                let stepped = self.seq2seq.encoder.step_projected(g, store, xw, enc_in)?;
                enc = select(g, &m.source, stepped, enc_in)?;
            } else {
                enc = enc_in;
            }
            if let Some(xw) = dec_x[t] {
                let dec_start = select(g, &m.first_target, enc_in, dec)?;
                let stepped = self.seq2seq.decoder.step_projected(g, store, xw, dec_start)?;
                let target: Vec<bool> = m.source.iter().map(|&s| !s).collect();
                dec = select(g, &target, stepped, dec)?;
                value = dec;
            }
            out.push(match pair_out {
                Some(p) => select(g, &m.source, p, value)?,
                None => value,
            });
        }
        Ok(out)
    }

    /// Runs the model on a batch of windows.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, batch: &WindowBatch) -> Result<FlowOutput> {
        let states = self.embed_states(g, store, batch)?;
        self.forward_from(g, store, batch, states)
    }

    /// Aggregation and induction over already embedded states (`[node][step]`).
    pub fn forward_from(&self, g: &mut Graph, store: &ParamStore, batch: &WindowBatch, states: Vec<Vec<Var>>) -> Result<FlowOutput> {
        self.check_batch(batch)?;
        let l = self.config.path_len;
        let mut cur = states;
        let mut path_last = None;
        for _ in 0..self.config.iterations {
            let path = self.path_aggregate(g, store, &cur)?;
            path_last = path.last().copied();
            if !self.config.induction {
                cur = vec![path; l];
                continue;
            }
            let mut next: Vec<Vec<Var>> = Vec::with_capacity(l);
            next.push(path.clone());
            for n in 0..l - 1 {
                let pred = match self.config.conditioning {
                    Conditioning::Predecessor => next[n].clone(),
                    Conditioning::PathState => path.clone(),
                };
                let updated = self.induction(g, store, &batch.masks[n], &pred, &cur[n + 1])?;
                next.push(updated);
            }
            cur = next;
        }
        let nodes = cur.iter().map(|s| s[s.len() - 1]).collect();
        Ok(FlowOutput {
            nodes,
            path: path_last.expect("at least one iteration"),
        })
    }
}

#[cfg(test)]
mod tests;
