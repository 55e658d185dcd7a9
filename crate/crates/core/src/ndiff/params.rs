use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

/// Which part of a model a parameter belongs to.
///
/// The self-supervised objective routes gradients differently to each group:
/// the shared encoder, the physics predictor (path aggregator and induction),
/// the projector on the ground-truth branch, and task readouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    EncoderEta,
    PredictorTheta,
    ProjectorFm,
    Readout,
}

impl Partition {
    pub const ALL: [Partition; 4] = [
        Partition::EncoderEta,
        Partition::PredictorTheta,
        Partition::ProjectorFm,
        Partition::Readout,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::EncoderEta => "encoder_eta",
            Partition::PredictorTheta => "predictor_theta",
            Partition::ProjectorFm => "projector_fm",
            Partition::Readout => "readout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub partition: Partition,
    pub value: Tensor,
    pub grad: Tensor,
    /// Adam first moment.
    pub m: Tensor,
    /// Adam second moment.
    pub v: Tensor,
    /// Number of optimizer updates applied to this parameter.
    pub steps: u64,
}

impl Param {
    pub fn reset_optimizer(&mut self) {
        self.grad.fill(0.0);
        self.m.fill(0.0);
        self.v.fill(0.0);
        self.steps = 0;
    }
}

/// Named model parameters with gradients and optimizer moments.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Param>,
    #[serde(skip)]
    by_name: BTreeMap<String, ParamId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, partition: Partition, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        let id = ParamId(self.params.len());
        let (r, c) = (value.rows(), value.cols());
        self.params.push(Param {
            name: name.clone(),
            partition,
            value,
            grad: Tensor::zeros(r, c),
            m: Tensor::zeros(r, c),
            v: Tensor::zeros(r, c),
            steps: 0,
        });
        self.by_name.insert(name, id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids_in(&self, partition: Partition) -> Vec<ParamId> {
        self.iter()
            .filter(|(_, p)| p.partition == partition)
            .map(|(id, _)| id)
            .collect()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Rebuilds the name index; needed after deserialization.
    pub fn reindex(&mut self) -> Result<()> {
        self.by_name.clear();
        for (i, p) in self.params.iter().enumerate() {
            if self.by_name.insert(p.name.clone(), ParamId(i)).is_some() {
                return Err(Error::Config(format!("duplicate parameter name `{}`", p.name)));
            }
        }
        Ok(())
    }

    /// Copies parameter values (not moments) from `other`, matching by name.
    pub fn load_values_from(&mut self, other: &ParamStore) -> Result<()> {
        for p in &mut self.params {
            let Some(src) = other.find(&p.name) else {
                return Err(Error::Config(format!("parameter `{}` missing from source store", p.name)));
            };
            let src = &other.params[src.0].value;
            if src.shape() != p.value.shape() {
                return Err(Error::Config(format!(
                    "parameter `{}` has shape {:?}, source has {:?}",
                    p.name,
                    p.value.shape(),
                    src.shape()
                )));
            }
            p.value = src.clone();
        }
        Ok(())
    }

    /// Snapshot of all parameter values, for model selection.
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Tensor]) {
        for (p, v) in self.params.iter_mut().zip(snapshot) {
            p.value = v.clone();
        }
    }

    /// One bias-corrected Adam update of every parameter whose partition
    /// passes `trainable`, using the gradients currently stored.
    pub fn adam_step(&mut self, cfg: &AdamConfig, trainable: impl Fn(Partition) -> bool) {
        for p in &mut self.params {
            if !trainable(p.partition) {
                continue;
            }
            p.steps += 1;
            let t = p.steps as i32;
            let bc1 = 1.0 - libm::pow(cfg.beta1, t as f64);
            let bc2 = 1.0 - libm::pow(cfg.beta2, t as f64);
            let (vals, grads) = (p.value.data_mut(), p.grad.data());
            let (m, v) = (p.m.data_mut(), p.v.data_mut());
            for i in 0..vals.len() {
                let g = grads[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                vals[i] -= cfg.lr * m_hat / (libm::sqrt(v_hat) + cfg.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn store_with(value: Vec<f64>) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let n = value.len();
        let id = s.add("w", Partition::PredictorTheta, Tensor::from_vec(1, n, value)).unwrap();
        (s, id)
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::new();
        s.add("a", Partition::Readout, Tensor::zeros(1, 1)).unwrap();
        assert!(s.add("a", Partition::Readout, Tensor::zeros(1, 1)).is_err());
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let (mut s, id) = store_with(vec![0.5, -1.25, 3.0]);
        let before = s.value(id).clone();
        for _ in 0..5 {
            s.adam_step(&AdamConfig::default(), |_| true);
        }
        assert_eq!(s.value(id), &before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g and v_hat = g^2 after one step, so the update is
        // lr * g / (|g| + eps).
        let (mut s, id) = store_with(vec![1.0, 1.0]);
        s.get_mut(id).grad = Tensor::from_vec(1, 2, vec![0.3, -7.0]);
        let cfg = AdamConfig::default();
        s.adam_step(&cfg, |_| true);
        let expected0 = 1.0 - cfg.lr * 0.3 / (0.3 + cfg.eps);
        let expected1 = 1.0 + cfg.lr * 7.0 / (7.0 + cfg.eps);
        assert!((s.value(id).get(0, 0) - expected0).abs() < 1e-15);
        assert!((s.value(id).get(0, 1) - expected1).abs() < 1e-15);
        assert!(((1.0 - s.value(id).get(0, 0)) - cfg.lr).abs() < 1e-10);
    }

    #[test]
    fn repeated_runs_are_identical() {
        let run = || {
            let (mut s, id) = store_with(vec![0.1, 0.2, 0.3]);
            for k in 0..10 {
                s.get_mut(id).grad = Tensor::from_vec(1, 3, vec![k as f64, -0.5, 0.25 * k as f64]);
                s.adam_step(&AdamConfig::default(), |_| true);
            }
            s.value(id).clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn frozen_partitions_are_skipped() {
        let mut s = ParamStore::new();
        let a = s.add("a", Partition::EncoderEta, Tensor::filled(1, 2, 1.0)).unwrap();
        let b = s.add("b", Partition::Readout, Tensor::filled(1, 2, 1.0)).unwrap();
        s.get_mut(a).grad.fill(1.0);
        s.get_mut(b).grad.fill(1.0);
        s.adam_step(&AdamConfig::default(), |p| p == Partition::Readout);
        assert_eq!(s.value(a), &Tensor::filled(1, 2, 1.0));
        assert_ne!(s.value(b), &Tensor::filled(1, 2, 1.0));
        assert_eq!(s.get(a).steps, 0);
    }
}
