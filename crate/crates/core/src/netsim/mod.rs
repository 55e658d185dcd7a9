//! Fluid flow simulator.
//!
//! Sources pace bits under a CUBIC-style window, links serve FIFO queues at a
//! fixed capacity and hand served bits to the next hop after a propagation
//! delay. Telemetry is accumulated per millisecond and emitted as
//! [`FlowTrace`](crate::trace::FlowTrace)s.

mod cubic;
mod queue;
mod sim;

pub use cubic::{cubic_k, cubic_window, on_congestion_event, CubicState};
pub use queue::{Chunk, LinkQueue};
pub use sim::{run, Simulator};

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::MAX_PATH_LEN;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub from: String,
    pub to: String,
    pub capacity_bps: f64,
    pub delay_ms: f64,
    pub buffer_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub nodes: Vec<String>,
    pub links: Vec<Link>,
}

/// Exponentially distributed on/off source activity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnOff {
    pub mean_on_ms: f64,
    pub mean_off_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub flow_id: u32,
    pub path: Vec<String>,
    pub start_ms: u64,
    /// Exclusive; the source stops injecting here.
    pub end_ms: u64,
    pub initial_window_bits: f64,
    /// Message size; unlimited when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_bits: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub on_off: Option<OnOff>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    /// Simulation ticks per 1 ms telemetry sample.
    pub ticks_per_ms: u32,
    /// CUBIC growth constant in segments per s^3.
    pub cubic_c: f64,
    pub cubic_beta: f64,
    /// Segment size; windows are kept in bits and sources inject whole
    /// segments.
    pub mss_bits: f64,
    pub floor_window_bits: f64,
    /// A flow reacts when its smoothed RTT exceeds this multiple of the base RTT.
    pub rtt_threshold: f64,
    pub srtt_gain: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            ticks_per_ms: 10,
            cubic_c: 0.4,
            cubic_beta: 0.7,
            mss_bits: 12_000.0,
            floor_window_bits: 24_000.0,
            rtt_threshold: 1.5,
            srtt_gain: 0.125,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub topology: Topology,
    pub flows: Vec<FlowSpec>,
    #[serde(default)]
    pub params: SimParams,
    #[serde(default)]
    pub seed: u64,
    pub horizon_ms: u64,
}

/// Index form of a validated scenario.
#[derive(Debug, Clone)]
pub(crate) struct Compiled {
    pub links: Vec<CompiledLink>,
    /// Per flow, the link index of each hop.
    pub routes: Vec<Vec<usize>>,
    /// Per flow, node indices along the path.
    pub node_paths: Vec<Vec<usize>>,
    pub node_count: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct CompiledLink {
    pub capacity_per_tick: f64,
    pub delay_ticks: u64,
    pub buffer_bits: f64,
}

fn cfg(field: &str, detail: impl core::fmt::Display) -> Error {
    Error::Config(format!("{field}: {detail}"))
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(cfg(field, format!("must be finite and > 0, got {v}")))
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if self.ticks_per_ms == 0 {
            return Err(cfg("params.ticks_per_ms", "must be >= 1"));
        }
        positive("params.cubic_c", self.cubic_c)?;
        if !(self.cubic_beta > 0.0 && self.cubic_beta < 1.0) {
            return Err(cfg("params.cubic_beta", format!("must lie in (0,1), got {}", self.cubic_beta)));
        }
        positive("params.mss_bits", self.mss_bits)?;
        positive("params.floor_window_bits", self.floor_window_bits)?;
        positive("params.rtt_threshold", self.rtt_threshold)?;
        if !(self.srtt_gain > 0.0 && self.srtt_gain <= 1.0) {
            return Err(cfg("params.srtt_gain", format!("must lie in (0,1], got {}", self.srtt_gain)));
        }
        Ok(())
    }

    pub fn tick_s(&self) -> f64 {
        1e-3 / self.ticks_per_ms as f64
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.compile().map(|_| ())
    }

    pub(crate) fn compile(&self) -> Result<Compiled> {
        self.params.validate()?;
        if self.horizon_ms == 0 {
            return Err(cfg("horizon_ms", "must be >= 1"));
        }
        let mut node_index = BTreeMap::new();
        for (i, n) in self.topology.nodes.iter().enumerate() {
            if node_index.insert(n.as_str(), i).is_some() {
                return Err(cfg(&format!("topology.nodes[{i}]"), format!("duplicate node {n:?}")));
            }
        }
        let tpm = self.params.ticks_per_ms as f64;
        let mut link_index = BTreeMap::new();
        let mut links = Vec::with_capacity(self.topology.links.len());
        for (i, l) in self.topology.links.iter().enumerate() {
            let field = format!("topology.links[{i}]");
            let u = *node_index
                .get(l.from.as_str())
                .ok_or_else(|| cfg(&format!("{field}.from"), format!("unknown node {:?}", l.from)))?;
            let v = *node_index
                .get(l.to.as_str())
                .ok_or_else(|| cfg(&format!("{field}.to"), format!("unknown node {:?}", l.to)))?;
            positive(&format!("{field}.capacity_bps"), l.capacity_bps)?;
            positive(&format!("{field}.buffer_bits"), l.buffer_bits)?;
            if !(l.delay_ms.is_finite() && l.delay_ms >= 0.0) {
                return Err(cfg(&format!("{field}.delay_ms"), format!("must be finite and >= 0, got {}", l.delay_ms)));
            }
            let ticks = libm::round(l.delay_ms * tpm);
            if (ticks / tpm - l.delay_ms).abs() > 1e-9 {
                return Err(cfg(
                    &format!("{field}.delay_ms"),
                    format!("{} is not a multiple of the tick (1/{} ms)", l.delay_ms, self.params.ticks_per_ms),
                ));
            }
            if link_index.insert((u, v), i).is_some() {
                return Err(cfg(&field, format!("duplicate link {} -> {}", l.from, l.to)));
            }
            links.push(CompiledLink {
                capacity_per_tick: l.capacity_bps * self.params.tick_s(),
                // served bits always spend at least one tick in flight
                delay_ticks: (ticks as u64).max(1),
                buffer_bits: l.buffer_bits,
            });
        }
        let mut routes = Vec::with_capacity(self.flows.len());
        let mut node_paths = Vec::with_capacity(self.flows.len());
        let mut ids = BTreeMap::new();
        for (i, f) in self.flows.iter().enumerate() {
            let field = format!("flows[{i}]");
            if ids.insert(f.flow_id, i).is_some() {
                return Err(cfg(&format!("{field}.flow_id"), format!("duplicate flow id {}", f.flow_id)));
            }
            if f.path.len() < 2 || f.path.len() > MAX_PATH_LEN {
                return Err(cfg(&format!("{field}.path"), format!("length {} outside [2,{MAX_PATH_LEN}]", f.path.len())));
            }
            let mut nodes = Vec::with_capacity(f.path.len());
            for (j, n) in f.path.iter().enumerate() {
                let idx = *node_index
                    .get(n.as_str())
                    .ok_or_else(|| cfg(&format!("{field}.path[{j}]"), format!("unknown node {n:?}")))?;
                if nodes.contains(&idx) {
                    return Err(cfg(&format!("{field}.path[{j}]"), format!("node {n:?} repeats")));
                }
                nodes.push(idx);
            }
            let mut route = Vec::with_capacity(nodes.len() - 1);
            for (j, w) in nodes.windows(2).enumerate() {
                let l = *link_index.get(&(w[0], w[1])).ok_or_else(|| {
                    cfg(&format!("{field}.path[{j}]"), format!("no link {} -> {}", f.path[j], f.path[j + 1]))
                })?;
                route.push(l);
            }
            if f.start_ms >= f.end_ms || f.end_ms > self.horizon_ms {
                return Err(cfg(
                    &format!("{field}.end_ms"),
                    format!("lifetime [{}, {}) must be nonempty and within horizon {}", f.start_ms, f.end_ms, self.horizon_ms),
                ));
            }
            positive(&format!("{field}.initial_window_bits"), f.initial_window_bits)?;
            if let Some(s) = f.size_bits {
                if !(s.is_finite() && s >= 0.0) {
                    return Err(cfg(&format!("{field}.size_bits"), format!("must be finite and >= 0, got {s}")));
                }
            }
            if let Some(o) = f.on_off {
                positive(&format!("{field}.on_off.mean_on_ms"), o.mean_on_ms)?;
                positive(&format!("{field}.on_off.mean_off_ms"), o.mean_off_ms)?;
            }
            routes.push(route);
            node_paths.push(nodes);
        }
        Ok(Compiled {
            links,
            routes,
            node_paths,
            node_count: self.topology.nodes.len(),
        })
    }
}
