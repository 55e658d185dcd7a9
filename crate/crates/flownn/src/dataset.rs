//! Dataset manifests: the split, normalization and windowing of a trace set.

use std::path::{Path, PathBuf};

use flownn_core::trace::{build_dataset, DatasetSplit, FlowTrace};
use flownn_core::train::{build_examples, Example, WindowSpec};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_json, sha256_hex};
use crate::tracecsv;

pub const FORMAT: &str = "flownn-dataset/1";

/// How a dataset is cut from traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub ratio: [u32; 3],
    pub n_unseen: usize,
    pub seed: u64,
    pub window: WindowSpec,
    /// Spacing of training targets; evaluation uses `eval_stride`.
    pub train_stride: usize,
    pub eval_stride: usize,
    /// Path length the models are built for; the most common one when absent.
    pub path_len: Option<usize>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            ratio: [6, 2, 2],
            n_unseen: 10,
            seed: 0,
            window: WindowSpec::default(),
            train_stride: 1,
            eval_stride: 1,
            path_len: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub traces: PathBuf,
    /// Digest over the canonical CSV form of every trace, in flow order.
    pub traces_sha256: String,
    pub config: DatasetConfig,
    pub path_len: usize,
    pub normalization: String,
    pub split: DatasetSplit,
}

/// Examples for every role, cut per a manifest.
#[derive(Debug, Clone)]
pub struct Examples {
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Vec<Example>,
    /// Held-out flows over the test range.
    pub unseen: Vec<Example>,
}

pub fn traces_digest(traces: &[FlowTrace]) -> String {
    let mut all = Vec::new();
    for t in traces {
        all.extend_from_slice(tracecsv::to_csv(t).as_bytes());
    }
    sha256_hex(&all)
}

fn modal_path_len(traces: &[FlowTrace], ids: &[u32]) -> usize {
    let mut counts = [0usize; flownn_core::trace::MAX_PATH_LEN + 1];
    for t in traces.iter().filter(|t| ids.contains(&t.flow_id)) {
        counts[t.path_len()] += 1;
    }
    // ties go to the longer path
    (0..counts.len()).rev().max_by_key(|&l| counts[l]).unwrap_or(0)
}

pub fn build(traces_path: &Path, traces: &[FlowTrace], config: &DatasetConfig) -> Result<DatasetManifest> {
    let split = build_dataset(traces, config.ratio, config.n_unseen, config.seed)?;
    let path_len = config
        .path_len
        .unwrap_or_else(|| modal_path_len(traces, &split.seen_flow_ids));
    if path_len < 2 {
        return Err(Error::Usage(format!(
            "dataset needs flows with at least 2 nodes, the most common seen path has {path_len}"
        )));
    }
    Ok(DatasetManifest {
        format: FORMAT.into(),
        traces: traces_path.to_path_buf(),
        traces_sha256: traces_digest(traces),
        config: config.clone(),
        path_len,
        normalization: "global per-feature z-score over the train range of seen flows; delay normalized the same way".into(),
        split,
    })
}

impl DatasetManifest {
    /// Cuts examples with `delta`-step targets.
    pub fn examples(&self, traces: &[FlowTrace], delta: usize) -> Result<Examples> {
        let s = &self.split;
        let spec = |stride: usize| WindowSpec {
            delta,
            stride,
            ..self.config.window
        };
        let cut = |ids: &[u32], range: std::ops::Range<u64>, stride: usize| {
            build_examples(traces, &s.stats, ids, range, &spec(stride), self.path_len)
        };
        let ex = Examples {
            train: cut(&s.seen_flow_ids, s.train.clone(), self.config.train_stride)?,
            val: cut(&s.seen_flow_ids, s.val.clone(), self.config.eval_stride)?,
            test: cut(&s.seen_flow_ids, s.test.clone(), self.config.eval_stride)?,
            unseen: cut(&s.unseen_flow_ids, s.test.clone(), self.config.eval_stride)?,
        };
        if ex.train.is_empty() || ex.val.is_empty() || ex.test.is_empty() {
            return Err(Error::Usage(format!(
                "dataset yields {} train, {} validation and {} test examples for L={}; every role needs at least one",
                ex.train.len(),
                ex.val.len(),
                ex.test.len(),
                self.path_len
            )));
        }
        Ok(ex)
    }
}

/// Loads a manifest and its traces, checking the traces still match.
pub fn load(path: &Path) -> Result<(DatasetManifest, Vec<FlowTrace>)> {
    let m: DatasetManifest = read_json(path)?;
    if m.format != FORMAT {
        return Err(Error::Usage(format!("{}: unsupported dataset format {:?}", path.display(), m.format)));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let traces_path = if m.traces.is_absolute() { m.traces.clone() } else { base.join(&m.traces) };
    let traces = tracecsv::read_path(&traces_path)?;
    if traces_digest(&traces) != m.traces_sha256 {
        return Err(Error::Usage(format!("{}: traces changed since the dataset was built", traces_path.display())));
    }
    Ok((m, traces))
}
