//! Checkpoints: a JSON manifest plus a sidecar of little-endian f64 arrays.
//!
//! The sidecar holds, for every parameter in manifest order, its values,
//! then its first and then its second Adam moment.

use std::fs;
use std::path::{Path, PathBuf};

use flownn_core::ndiff::{Mlp, ParamStore, Partition, Tensor};
use flownn_core::train::{Backbone, Network};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_json, sha256_hex, write_atomic, write_json};

pub const FORMAT: &str = "flownn-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub partition: Partition,
    pub rows: usize,
    pub cols: usize,
    /// Optimizer updates applied so far.
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub sidecar: String,
    pub sidecar_sha256: String,
    pub backbone: Backbone,
    pub projector: Option<Mlp>,
    pub rate_readout: Option<Mlp>,
    pub delay_readout: Mlp,
    pub params: Vec<ParamEntry>,
    /// Free-form provenance: training stage, dataset digest, ablation flags.
    pub tags: serde_json::Value,
}

/// Sidecar path for a manifest path (`x.json` -> `x.bin`).
pub fn sidecar_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

fn push_le(out: &mut Vec<u8>, t: &Tensor) {
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn save(path: &Path, net: &Network, tags: serde_json::Value) -> Result<()> {
    let mut bin = Vec::with_capacity(net.store.scalar_count() * 24);
    let mut params = Vec::with_capacity(net.store.len());
    for (_, p) in net.store.iter() {
        push_le(&mut bin, &p.value);
        push_le(&mut bin, &p.m);
        push_le(&mut bin, &p.v);
        let [rows, cols] = p.value.shape();
        params.push(ParamEntry {
            name: p.name.clone(),
            partition: p.partition,
            rows,
            cols,
            steps: p.steps,
        });
    }
    let side = sidecar_path(path);
    let manifest = CheckpointManifest {
        format: FORMAT.into(),
        sidecar: side.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        sidecar_sha256: sha256_hex(&bin),
        backbone: net.backbone.clone(),
        projector: net.projector.clone(),
        rate_readout: net.rate_readout.clone(),
        delay_readout: net.delay_readout.clone(),
        params,
        tags,
    };
    write_atomic(&side, &bin)?;
    write_json(path, &manifest)
}

pub fn load(path: &Path) -> Result<(Network, CheckpointManifest)> {
    let manifest: CheckpointManifest = read_json(path)?;
    if manifest.format != FORMAT {
        return Err(Error::Usage(format!(
            "{}: unsupported checkpoint format {:?}",
            path.display(),
            manifest.format
        )));
    }
    let side = path.with_file_name(&manifest.sidecar);
    let bin = fs::read(&side).map_err(|e| Error::io(&side, e))?;
    if sha256_hex(&bin) != manifest.sidecar_sha256 {
        return Err(Error::Usage(format!("{}: sidecar digest does not match the manifest", side.display())));
    }
    let expected: usize = manifest.params.iter().map(|p| p.rows * p.cols * 3 * 8).sum();
    if bin.len() != expected {
        return Err(Error::Usage(format!(
            "{}: {} bytes, manifest describes {expected}",
            side.display(),
            bin.len()
        )));
    }
    let mut floats = bin.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut take = |rows: usize, cols: usize| Tensor::from_vec(rows, cols, floats.by_ref().take(rows * cols).collect());
    let mut store = ParamStore::new();
    for e in &manifest.params {
        let value = take(e.rows, e.cols);
        let m = take(e.rows, e.cols);
        let v = take(e.rows, e.cols);
        let id = store.add(e.name.clone(), e.partition, value)?;
        let p = store.get_mut(id);
        p.m = m;
        p.v = v;
        p.steps = e.steps;
    }
    let net = Network {
        store,
        backbone: manifest.backbone.clone(),
        projector: manifest.projector.clone(),
        rate_readout: manifest.rate_readout.clone(),
        delay_readout: manifest.delay_readout.clone(),
    };
    Ok((net, manifest))
}
