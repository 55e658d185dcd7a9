//! Model construction and the train/evaluate steps shared by the command
//! line and the experiment harness.

use flownn_core::baselines::BaselineConfig;
use flownn_core::flownn::{Conditioning, ModelConfig};
use flownn_core::ndiff::Partition;
use flownn_core::trace::{Feature, FlowTrace};
use flownn_core::train::{
    arima_rate, evaluate_grouped, evaluate_network, finetune, fit_arima_rate, naive_rate, pretrain, target_flows,
    targets, EpochLog, Example, FinetuneLog, MetricReport, Network, Task, TrainConfig,
};
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, Examples};
use crate::error::{Error, Result};
use crate::io::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Naive,
    Arima,
    Gru,
    Mgru,
    Flownn,
    /// Readout on the last observed step, no learned backbone.
    Raw,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Naive => "naive",
            Self::Arima => "arima",
            Self::Gru => "gru",
            Self::Mgru => "mgru",
            Self::Flownn => "flownn",
            Self::Raw => "raw",
        }
    }

    pub fn is_neural(self) -> bool {
        !matches!(self, Self::Naive | Self::Arima)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub hidden: usize,
    pub iterations: usize,
    pub conditioning: Conditioning,
    pub induction: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kind: ModelKind::Flownn,
            hidden: 32,
            iterations: 2,
            conditioning: Conditioning::Predecessor,
            induction: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
}

impl Default for ArimaOrder {
    fn default() -> Self {
        Self { p: 3, d: 1 }
    }
}

pub fn network(spec: &ModelSpec, path_len: usize, window: usize, seed: u64) -> Result<Network> {
    let features = Feature::COUNT;
    let base = BaselineConfig {
        path_len,
        features,
        hidden: spec.hidden,
    };
    let net = match spec.kind {
        ModelKind::Flownn => {
            let cfg = ModelConfig {
                conditioning: spec.conditioning,
                induction: spec.induction,
                ..ModelConfig::new(path_len, spec.hidden, spec.iterations, window)
            };
            Network::flownn(cfg, seed)?
        }
        ModelKind::Gru => Network::gru(base, seed)?,
        ModelKind::Mgru => Network::mgru(base, seed)?,
        ModelKind::Raw => Network::raw(path_len, features, spec.hidden, seed)?,
        k => return Err(Error::Usage(format!("{} has no trainable network", k.as_str()))),
    };
    Ok(net)
}

/// Training history of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitLog {
    pub pretrain: Vec<EpochLog>,
    pub finetune: Option<FinetuneLog>,
}

/// Self-supervised pretraining, only meaningful for FlowNN.
pub fn pretrain_ssl(net: &mut Network, train: &[Example], cfg: &TrainConfig) -> Result<Vec<EpochLog>> {
    if cfg.epochs == 0 {
        return Ok(Vec::new());
    }
    Ok(pretrain(net, train, cfg)?)
}

/// Pretrains (FlowNN) and then finetunes the whole model for rates.
pub fn fit_rate(net: &mut Network, ex: &Examples, pre: &TrainConfig, ft: &TrainConfig) -> Result<FitLog> {
    let pretrain = if net.backbone.name() == "flownn" {
        pretrain_ssl(net, &ex.train, pre)?
    } else {
        Vec::new()
    };
    let log = finetune(net, Task::Rate, false, &ex.train, &ex.val, ft)?;
    Ok(FitLog {
        pretrain,
        finetune: Some(log),
    })
}

/// Attaches a fresh readout for `task` and trains it, with the backbone
/// frozen when asked.
pub fn fit_readout(
    net: &mut Network,
    task: Task,
    freeze: bool,
    train: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
) -> Result<FinetuneLog> {
    net.reset_readout(task, cfg.seed ^ 0x7ead);
    reset_moments(net, Partition::Readout);
    Ok(finetune(net, task, freeze, train, val, cfg)?)
}

/// Clears optimizer state of one partition so a new readout starts clean.
fn reset_moments(net: &mut Network, part: Partition) {
    let ids = net.store.ids_in(part);
    for id in ids {
        net.store.get_mut(id).reset_optimizer();
    }
}

/// Digest of every non-readout parameter value, for frozen-backbone checks.
pub fn backbone_digest(net: &Network) -> String {
    let mut bytes = Vec::new();
    for (_, p) in net.store.iter().filter(|(_, p)| p.partition != Partition::Readout) {
        bytes.extend(p.name.as_bytes());
        for v in p.value.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    sha256_hex(&bytes)
}

pub fn evaluate_model(net: &Network, task: Task, examples: &[Example]) -> Result<MetricReport> {
    Ok(evaluate_network(net, task, examples)?)
}

/// Rate predictions of the classic baselines on `examples`.
pub fn classic_predictions(
    kind: ModelKind,
    order: ArimaOrder,
    traces: &[FlowTrace],
    manifest: &DatasetManifest,
    examples: &[Example],
) -> Result<Vec<f64>> {
    match kind {
        ModelKind::Naive => Ok(naive_rate(examples)),
        ModelKind::Arima => {
            let s = &manifest.split;
            let params = fit_arima_rate(traces, &s.stats, &s.seen_flow_ids, s.train.clone(), order.p, order.d)?;
            Ok(arima_rate(&params, examples)?)
        }
        k => Err(Error::Usage(format!("{} is not a classic baseline", k.as_str()))),
    }
}

pub fn evaluate_predictions(task: Task, examples: &[Example], predictions: &[f64]) -> Result<MetricReport> {
    Ok(evaluate_grouped(&targets(task, examples), predictions, &target_flows(task, examples))?)
}
