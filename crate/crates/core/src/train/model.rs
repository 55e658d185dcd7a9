use alloc::format;
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::SslBatch;
use crate::baselines::{BaselineConfig, GruBaseline, MGru};
use crate::error::{shape_err, Error, Result};
use crate::flownn::{FlowNN, ModelConfig};
use crate::ndiff::{cosine_similarity, Activation, Graph, Mlp, ParamStore, Partition, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Rate,
    Delay,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Rate => "rate",
            Task::Delay => "delay",
        }
    }
}

/// Feature extractor under the task readouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    FlowNN(FlowNN),
    Gru(GruBaseline),
    MGru(MGru),
    /// No learned backbone: readouts see the last observed step directly.
    Raw { path_len: usize, features: usize },
}

impl Backbone {
    pub fn name(&self) -> &'static str {
        match self {
            Backbone::FlowNN(_) => "flownn",
            Backbone::Gru(_) => "gru",
            Backbone::MGru(_) => "mgru",
            Backbone::Raw { .. } => "raw",
        }
    }

    pub fn path_len(&self) -> usize {
        match self {
            Backbone::FlowNN(m) => m.config.path_len,
            Backbone::Gru(m) => m.config.path_len,
            Backbone::MGru(m) => m.config.path_len,
            Backbone::Raw { path_len, .. } => *path_len,
        }
    }

    pub fn features(&self) -> usize {
        match self {
            Backbone::FlowNN(m) => m.config.features,
            Backbone::Gru(m) => m.config.features,
            Backbone::MGru(m) => m.config.features,
            Backbone::Raw { features, .. } => *features,
        }
    }
}

/// A backbone with its parameters, the self-supervised projector (FlowNN
/// only) and task readouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub store: ParamStore,
    pub backbone: Backbone,
    pub projector: Option<Mlp>,
    /// Per-node rate readout for FlowNN; the baselines carry their own.
    pub rate_readout: Option<Mlp>,
    pub delay_readout: Mlp,
}

impl Network {
    pub fn flownn(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let model = FlowNN::new(&mut store, config, &mut rng)?;
        let d = config.hidden;
        let projector = Mlp::new(&mut store, "projector", Partition::ProjectorFm, &[d, d, d], Activation::Tanh, &mut rng)?;
        let rate = Mlp::new(&mut store, "readout.rate", Partition::Readout, &[d, d, 1], Activation::Tanh, &mut rng)?;
        let delay = Mlp::new(&mut store, "readout.delay", Partition::Readout, &[d, d, 1], Activation::Tanh, &mut rng)?;
        Ok(Self {
            store,
            backbone: Backbone::FlowNN(model),
            projector: Some(projector),
            rate_readout: Some(rate),
            delay_readout: delay,
        })
    }

    pub fn gru(config: BaselineConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let model = GruBaseline::new(&mut store, config, &mut rng)?;
        let d = config.hidden;
        let delay = Mlp::new(&mut store, "readout.delay", Partition::Readout, &[d, d, 1], Activation::Tanh, &mut rng)?;
        Ok(Self {
            store,
            backbone: Backbone::Gru(model),
            projector: None,
            rate_readout: None,
            delay_readout: delay,
        })
    }

    pub fn mgru(config: BaselineConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let model = MGru::new(&mut store, config, &mut rng)?;
        let d = config.hidden;
        let delay = Mlp::new(&mut store, "readout.delay", Partition::Readout, &[d, d, 1], Activation::Tanh, &mut rng)?;
        Ok(Self {
            store,
            backbone: Backbone::MGru(model),
            projector: None,
            rate_readout: None,
            delay_readout: delay,
        })
    }

    /// Readout-only model on the last observed step of every node.
    pub fn raw(path_len: usize, features: usize, hidden: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let delay = Mlp::new(
            &mut store,
            "readout.delay",
            Partition::Readout,
            &[path_len * features, hidden, 1],
            Activation::Tanh,
            &mut rng,
        )?;
        Ok(Self {
            store,
            backbone: Backbone::Raw { path_len, features },
            projector: None,
            rate_readout: None,
            delay_readout: delay,
        })
    }

    /// Fresh weights for the readout used by `task`.
    pub fn reset_readout(&mut self, task: Task, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match task {
            Task::Delay => self.delay_readout.reinit(&mut self.store, &mut rng),
            Task::Rate => match &self.backbone {
                Backbone::FlowNN(_) => {
                    if let Some(r) = &self.rate_readout {
                        r.reinit(&mut self.store, &mut rng);
                    }
                }
                Backbone::Gru(m) => m.readout.reinit(&mut self.store, &mut rng),
                Backbone::MGru(m) => m.readout.reinit(&mut self.store, &mut rng),
                Backbone::Raw { .. } => {}
            },
        }
    }

    fn check(&self, batch: &SslBatch) -> Result<()> {
        let w = &batch.windows;
        if w.nodes != self.backbone.path_len() || w.features != self.backbone.features() {
            return Err(shape_err(
                self.backbone.name(),
                format!(
                    "batch has {} nodes x {} features, model expects {} x {}",
                    w.nodes,
                    w.features,
                    self.backbone.path_len(),
                    self.backbone.features()
                ),
            ));
        }
        Ok(())
    }

    /// `batch x path_len` normalized rate predictions.
    pub fn rate_forward(&self, g: &mut Graph, batch: &SslBatch) -> Result<Var> {
        self.check(batch)?;
        let s = &self.store;
        match &self.backbone {
            Backbone::FlowNN(m) => {
                let out = m.forward(g, s, &batch.windows)?;
                let readout = self.rate_readout.as_ref().ok_or_else(|| Error::Config("missing rate readout".into()))?;
                let per_node = out
                    .nodes
                    .iter()
                    .map(|&h| readout.forward(g, s, h))
                    .collect::<Result<Vec<_>>>()?;
                g.concat_cols(&per_node)
            }
            Backbone::Gru(m) => m.forward(g, s, &batch.windows),
            Backbone::MGru(m) => m.forward(g, s, &batch.windows),
            Backbone::Raw { .. } => Err(Error::Config("the raw-feature model has no rate readout".into())),
        }
    }

    /// Input to the delay readout.
    pub fn delay_features(&self, g: &mut Graph, batch: &SslBatch) -> Result<Var> {
        self.check(batch)?;
        let s = &self.store;
        let w = &batch.windows;
        match &self.backbone {
            Backbone::FlowNN(m) => {
                let out = m.forward(g, s, w)?;
                Ok(out.nodes[out.nodes.len() - 1])
            }
            Backbone::Gru(m) => {
                let states = m.encode(g, s, w)?;
                Ok(states[states.len() - 1])
            }
            Backbone::MGru(m) => m.encode(g, s, w),
            Backbone::Raw { .. } => {
                let x = g.constant(w.inputs.clone());
                let last = w.steps - 1;
                let nodes = (0..w.nodes)
                    .map(|n| g.slice_rows(x, (last * w.nodes + n) * w.batch, w.batch))
                    .collect::<Result<Vec<_>>>()?;
                g.concat_cols(&nodes)
            }
        }
    }

    /// `batch x 1` normalized destination delay predictions.
    pub fn delay_forward(&self, g: &mut Graph, batch: &SslBatch) -> Result<Var> {
        let h = self.delay_features(g, batch)?;
        self.delay_readout.forward(g, &self.store, h)
    }

    pub fn task_forward(&self, g: &mut Graph, batch: &SslBatch, task: Task) -> Result<Var> {
        match task {
            Task::Rate => self.rate_forward(g, batch),
            Task::Delay => self.delay_forward(g, batch),
        }
    }

    /// Projected embedding of the target step (`Z`) and the model's
    /// prediction of it from history (`Z_hat`), both `batch x (path_len * hidden)`.
    pub fn ssl_views(&self, g: &mut Graph, batch: &SslBatch) -> Result<(Var, Var)> {
        self.check(batch)?;
        let Backbone::FlowNN(m) = &self.backbone else {
            return Err(Error::Config(format!("{} has no self-supervised objective", self.backbone.name())));
        };
        let projector = self.projector.as_ref().ok_or_else(|| Error::Config("missing projector".into()))?;
        let s = &self.store;
        let b = batch.windows.batch;
        let next = g.constant(batch.next.clone());
        let e = m.embed.forward(g, s, next)?;
        let z = projector.forward(g, s, e)?;
        let z_nodes = (0..m.config.path_len)
            .map(|n| g.slice_rows(z, n * b, b))
            .collect::<Result<Vec<_>>>()?;
        let z = g.concat_cols(&z_nodes)?;
        let out = m.forward(g, s, &batch.windows)?;
        let z_hat = g.concat_cols(&out.nodes)?;
        Ok((z, z_hat))
    }
}

/// The two halves of the symmetric stop-gradient objective.
#[derive(Debug, Clone, Copy)]
pub struct SslTerms {
    /// `-cos(sg(Z_hat), Z) / 2`: trains the target side only.
    pub target_term: Var,
    /// `-cos(Z_hat, sg(Z)) / 2`: trains the predictor side only.
    pub predictor_term: Var,
    pub loss: Var,
}

/// Row-wise cosine between `z` and `z_hat`, averaged over the batch, split
/// into the two stop-gradient terms. A single-row input gives exactly
/// `-cos(sg(Z_hat), Z)/2 - cos(Z_hat, sg(Z))/2` of the flattened vectors.
pub fn ssl_terms(g: &mut Graph, z: Var, z_hat: Var) -> Result<SslTerms> {
    if g.shape(z) != g.shape(z_hat) {
        return Err(shape_err("ssl_loss", format!("{:?} vs {:?}", g.shape(z), g.shape(z_hat))));
    }
    let rows = g.shape(z)[0];
    let term = |g: &mut Graph, a: Var, b: Var| -> Result<Var> {
        let c = if rows == 1 {
            cosine_similarity(g, a, b)?.0
        } else {
            g.row_cosine(a, b)?
        };
        let m = g.mean(c);
        Ok(g.scale(m, -0.5))
    };
    let sg_hat = g.stop_gradient(z_hat);
    let target_term = term(g, sg_hat, z)?;
    let sg_z = g.stop_gradient(z);
    let predictor_term = term(g, z_hat, sg_z)?;
    let loss = g.add(target_term, predictor_term)?;
    Ok(SslTerms {
        target_term,
        predictor_term,
        loss,
    })
}

pub fn ssl_loss(g: &mut Graph, z: Var, z_hat: Var) -> Result<Var> {
    Ok(ssl_terms(g, z, z_hat)?.loss)
}
