use alloc::format;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::flownn::{FlowNN, WindowBatch};
use crate::ndiff::{Activation, Graph, GruCell, Mlp, ParamStore, Partition, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub path_len: usize,
    pub features: usize,
    pub hidden: usize,
}

fn check(batch: &WindowBatch, cfg: &BaselineConfig, who: &str) -> Result<()> {
    if batch.nodes != cfg.path_len || batch.features != cfg.features {
        return Err(shape_err(
            who,
            format!(
                "batch has {} nodes x {} features, model expects {} x {}",
                batch.nodes, batch.features, cfg.path_len, cfg.features
            ),
        ));
    }
    Ok(())
}

/// One GRU and readout shared by all nodes; each node's series is encoded
/// on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruBaseline {
    pub config: BaselineConfig,
    pub gru: GruCell,
    pub readout: Mlp,
}

impl GruBaseline {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, config: BaselineConfig, rng: &mut R) -> Result<Self> {
        let d = config.hidden;
        Ok(Self {
            config,
            gru: GruCell::new(store, "gru.cell", Partition::PredictorTheta, config.features, d, rng)?,
            readout: Mlp::new(store, "gru.readout", Partition::Readout, &[d, d, 1], Activation::Tanh, rng)?,
        })
    }

    /// Final hidden state per node, `batch x hidden` each.
    pub fn encode(&self, g: &mut Graph, store: &ParamStore, batch: &WindowBatch) -> Result<Vec<Var>> {
        check(batch, &self.config, "gru baseline")?;
        let (l, b) = (batch.nodes, batch.batch);
        let x = g.constant(batch.inputs.clone());
        // rows of one step are ordered (node, sample): all nodes run as one batch
        let mut h = g.zeros(l * b, self.config.hidden);
        for t in 0..batch.steps {
            let xt = g.slice_rows(x, t * l * b, l * b)?;
            h = self.gru.step(g, store, xt, h)?;
        }
        (0..l).map(|n| g.slice_rows(h, n * b, b)).collect()
    }

    /// `batch x path_len` next-step predictions.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, batch: &WindowBatch) -> Result<Var> {
        let states = self.encode(g, store, batch)?;
        let outs = states
            .into_iter()
            .map(|h| self.readout.forward(g, store, h))
            .collect::<Result<Vec<_>>>()?;
        g.concat_cols(&outs)
    }
}

/// Multivariate GRU: per-step node embeddings are concatenated along the
/// path, merged, and rolled through one GRU; a joint readout predicts every
/// node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MGru {
    pub config: BaselineConfig,
    pub embed: Mlp,
    pub merge: Mlp,
    pub gru: GruCell,
    pub readout: Mlp,
}

impl MGru {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, config: BaselineConfig, rng: &mut R) -> Result<Self> {
        let (f, d, l) = (config.features, config.hidden, config.path_len);
        let theta = Partition::PredictorTheta;
        Ok(Self {
            config,
            embed: Mlp::new(store, "mgru.embed", Partition::EncoderEta, &[f, d, d], Activation::Tanh, rng)?,
            merge: Mlp::new(store, "mgru.merge", theta, &[l * d, d, d], Activation::Tanh, rng)?,
            gru: GruCell::new(store, "mgru.gru", theta, d, d, rng)?,
            readout: Mlp::new(store, "mgru.readout", Partition::Readout, &[d, d, l], Activation::Tanh, rng)?,
        })
    }

    /// Reuses the embedding, node merge and path GRU of a FlowNN model.
    pub fn sharing(model: &FlowNN, readout: Mlp) -> Self {
        let c = &model.config;
        Self {
            config: BaselineConfig {
                path_len: c.path_len,
                features: c.features,
                hidden: c.hidden,
            },
            embed: model.embed.clone(),
            merge: model.merge.clone(),
            gru: model.path_gru.clone(),
            readout,
        }
    }

    /// Final GRU state, `batch x hidden`.
    pub fn encode(&self, g: &mut Graph, store: &ParamStore, batch: &WindowBatch) -> Result<Var> {
        check(batch, &self.config, "m-gru")?;
        let (l, b) = (batch.nodes, batch.batch);
        let x = g.constant(batch.inputs.clone());
        let mut h = g.zeros(b, self.config.hidden);
        for t in 0..batch.steps {
            let mut nodes = Vec::with_capacity(l);
            for n in 0..l {
                let xn = g.slice_rows(x, (t * l + n) * b, b)?;
                nodes.push(self.embed.forward(g, store, xn)?);
            }
            let joint = g.concat_cols(&nodes)?;
            let merged = self.merge.forward(g, store, joint)?;
            h = self.gru.step(g, store, merged, h)?;
        }
        Ok(h)
    }

    /// `batch x path_len` next-step predictions.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, batch: &WindowBatch) -> Result<Var> {
        let h = self.encode(g, store, batch)?;
        self.readout.forward(g, store, h)
    }
}
