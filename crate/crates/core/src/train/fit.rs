use alloc::format;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{Example, SslBatch};
use super::metrics::{evaluate_grouped, MetricReport};
use super::model::{ssl_loss, Backbone, Network, Task};
use crate::error::{Error, Result};
use crate::ndiff::{AdamConfig, Graph, ParamStore, Partition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Caps the number of mini-batches drawn per epoch.
    pub max_batches: Option<usize>,
    /// Global gradient-norm clip.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            adam: AdamConfig::default(),
            patience: 10,
            seed: 0,
            max_batches: None,
            clip_norm: Some(5.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneLog {
    pub task: Task,
    pub frozen: bool,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val: f64,
}

const BACKBONE: [Partition; 2] = [Partition::EncoderEta, Partition::PredictorTheta];

fn clip(store: &mut ParamStore, max_norm: f64, trainable: &impl Fn(Partition) -> bool) {
    let ids: Vec<_> = store.iter().filter(|(_, p)| trainable(p.partition)).map(|(id, _)| id).collect();
    let sq: f64 = ids.iter().map(|&id| store.grad(id).data().iter().map(|g| g * g).sum::<f64>()).sum();
    let norm = libm::sqrt(sq);
    if norm > max_norm {
        let s = max_norm / norm;
        for id in ids {
            store.get_mut(id).grad.data_mut().iter_mut().for_each(|g| *g *= s);
        }
    }
}

/// Shuffled mini-batches of example indices for one epoch.
fn epoch_batches(n: usize, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut batches: Vec<Vec<usize>> = idx.chunks(cfg.batch_size.max(1)).map(|c| c.to_vec()).collect();
    if let Some(m) = cfg.max_batches {
        batches.truncate(m);
    }
    batches
}

fn batch_of(examples: &[Example], idx: &[usize]) -> Result<SslBatch> {
    let refs: Vec<&Example> = idx.iter().map(|&i| &examples[i]).collect();
    SslBatch::new(&refs)
}

fn optimize(
    net: &mut Network,
    frozen: &[Partition],
    trainable: impl Fn(Partition) -> bool,
    cfg: &TrainConfig,
    epoch: usize,
    loss_fn: impl Fn(&Network, &mut Graph) -> Result<crate::ndiff::Var>,
) -> Result<f64> {
    net.store.zero_grads();
    let mut g = Graph::with_frozen(frozen);
    let loss = loss_fn(net, &mut g)?;
    let value = g.value(loss).item();
    if !value.is_finite() {
        return Err(Error::Diverged {
            epoch,
            detail: format!("loss became {value}"),
        });
    }
    g.backward_into(loss, &mut net.store)?;
    if let Some(c) = cfg.clip_norm {
        clip(&mut net.store, c, &trainable);
    }
    net.store.adam_step(&cfg.adam, &trainable);
    Ok(value)
}

/// Self-supervised pretraining of encoder, predictor and projector. Returns
/// the mean loss per epoch.
pub fn pretrain(net: &mut Network, train: &[Example], cfg: &TrainConfig) -> Result<Vec<EpochLog>> {
    if !matches!(net.backbone, Backbone::FlowNN(_)) {
        return Err(Error::Config(format!("{} cannot be pretrained", net.backbone.name())));
    }
    if train.is_empty() {
        return Err(Error::Config("no pretraining examples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let trainable = |p: Partition| p != Partition::Readout;
    let mut logs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        let batches = epoch_batches(train.len(), cfg, &mut rng);
        for idx in &batches {
            let batch = batch_of(train, idx)?;
            total += optimize(net, &[Partition::Readout], trainable, cfg, epoch, |n, g| {
                let (z, z_hat) = n.ssl_views(g, &batch)?;
                ssl_loss(g, z, z_hat)
            })?;
        }
        logs.push(EpochLog {
            epoch,
            train_loss: total / batches.len() as f64,
            val_loss: None,
        });
    }
    Ok(logs)
}

/// Mean self-supervised loss over `examples` without updating anything.
pub fn ssl_eval(net: &Network, examples: &[Example], batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    for chunk in examples.chunks(batch_size.max(1)) {
        let refs: Vec<&Example> = chunk.iter().collect();
        let batch = SslBatch::new(&refs)?;
        let mut g = Graph::new();
        let (z, z_hat) = net.ssl_views(&mut g, &batch)?;
        let l = ssl_loss(&mut g, z, z_hat)?;
        total += g.value(l).item() * chunk.len() as f64;
    }
    Ok(total / examples.len().max(1) as f64)
}

/// Task labels in prediction order (`[example][node]` for rates).
pub fn targets(task: Task, examples: &[Example]) -> Vec<f64> {
    match task {
        Task::Rate => examples.iter().flat_map(|e| e.rate.iter().copied()).collect(),
        Task::Delay => examples.iter().map(|e| e.delay).collect(),
    }
}

/// Flow label of every target value.
pub fn target_flows(task: Task, examples: &[Example]) -> Vec<u32> {
    match task {
        Task::Rate => examples.iter().flat_map(|e| e.rate.iter().map(move |_| e.flow_id)).collect(),
        Task::Delay => examples.iter().map(|e| e.flow_id).collect(),
    }
}

pub fn predict(net: &Network, task: Task, examples: &[Example], batch_size: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for chunk in examples.chunks(batch_size.max(1)) {
        let refs: Vec<&Example> = chunk.iter().collect();
        let batch = SslBatch::new(&refs)?;
        let mut g = Graph::new();
        let y = net.task_forward(&mut g, &batch, task)?;
        out.extend_from_slice(g.value(y).data());
    }
    Ok(out)
}

pub fn mse_on(net: &Network, task: Task, examples: &[Example], batch_size: usize) -> Result<f64> {
    let p = predict(net, task, examples, batch_size)?;
    let y = targets(task, examples);
    Ok(p.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len().max(1) as f64)
}

/// Trains the readout for `task` (and the backbone unless `freeze_backbone`)
/// with an MSE objective, keeping the parameters with the best validation
/// MSE.
pub fn finetune(
    net: &mut Network,
    task: Task,
    freeze_backbone: bool,
    train: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
) -> Result<FinetuneLog> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config("finetuning needs train and validation examples".into()));
    }
    let mut frozen = alloc::vec![Partition::ProjectorFm];
    if freeze_backbone {
        frozen.extend_from_slice(&BACKBONE);
    }
    let trainable = |p: Partition| !frozen.contains(&p);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let eval_batch = 256;
    let mut best_val = mse_on(net, task, val, eval_batch)?;
    let mut best = net.store.snapshot();
    let mut best_epoch = 0;
    let mut since = 0;
    let mut logs = Vec::new();
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        let batches = epoch_batches(train.len(), cfg, &mut rng);
        for idx in &batches {
            let batch = batch_of(train, idx)?;
            let target = match task {
                Task::Rate => batch.rate.clone(),
                Task::Delay => batch.delay.clone(),
            };
            total += optimize(net, &frozen, trainable, cfg, epoch, |n, g| {
                let y = n.task_forward(g, &batch, task)?;
                g.mse(y, &target)
            })?;
        }
        let v = mse_on(net, task, val, eval_batch)?;
        if !v.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("validation MSE became {v}"),
            });
        }
        logs.push(EpochLog {
            epoch: epoch + 1,
            train_loss: total / batches.len() as f64,
            val_loss: Some(v),
        });
        if v < best_val {
            best_val = v;
            best = net.store.snapshot();
            best_epoch = epoch + 1;
            since = 0;
        } else {
            since += 1;
            if since >= cfg.patience {
                break;
            }
        }
    }
    net.store.restore(&best);
    Ok(FinetuneLog {
        task,
        frozen: freeze_backbone,
        epochs: logs,
        best_epoch,
        best_val,
    })
}

/// Predicts `examples` and scores them with a per-flow breakdown.
pub fn evaluate_network(net: &Network, task: Task, examples: &[Example]) -> Result<MetricReport> {
    let p = predict(net, task, examples, 256)?;
    evaluate_grouped(&targets(task, examples), &p, &target_flows(task, examples))
}
