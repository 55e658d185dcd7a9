//! Bundled scenario generators.
//!
//! The JSON files under `scenarios/` are the default outputs of these
//! generators; variants (fewer flows, shorter horizon, another seed) are made
//! by calling the generator directly.

use flownn_core::netsim::{FlowSpec, Link, OnOff, Scenario, SimParams, Topology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const BUNDLED: [&str; 3] = ["line5", "mesh27", "fabric3"];

/// Sources stop this long before the horizon so queues drain.
const DRAIN_MS: u64 = 100;
const MSS: f64 = 12_000.0;

/// Generator knobs shared by the bundled families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub flows: usize,
    pub horizon_ms: u64,
    pub seed: u64,
}

impl Shape {
    pub fn default_for(name: &str) -> Option<Self> {
        let (flows, horizon_ms) = match name {
            "line5" => (50, 30_000),
            "mesh27" => (48, 30_000),
            "fabric3" => (40, 30_000),
            _ => return None,
        };
        Some(Self { flows, horizon_ms, seed: 1 })
    }
}

pub fn generate(name: &str, shape: Shape) -> Result<Scenario> {
    if shape.flows == 0 || shape.horizon_ms <= DRAIN_MS + 10 {
        return Err(Error::Usage(format!(
            "scenario {name}: need at least one flow and a horizon above {} ms",
            DRAIN_MS + 10
        )));
    }
    match name {
        "line5" => Ok(line5(shape)),
        "mesh27" => Ok(mesh27(shape)),
        "fabric3" => Ok(fabric3(shape)),
        _ => Err(Error::Usage(format!(
            "unknown scenario {name:?}; bundled: {}",
            BUNDLED.join(", ")
        ))),
    }
}

/// The checked-in JSON for a bundled scenario.
pub fn bundled_json(name: &str) -> Option<&'static str> {
    match name {
        "line5" => Some(include_str!("../scenarios/line5.json")),
        "mesh27" => Some(include_str!("../scenarios/mesh27.json")),
        "fabric3" => Some(include_str!("../scenarios/fabric3.json")),
        _ => None,
    }
}

fn link(from: &str, to: &str, capacity_bps: f64, delay_ms: f64) -> Link {
    Link {
        from: from.into(),
        to: to.into(),
        capacity_bps,
        delay_ms,
        // Several RTTs of queueing; the delay-based trigger fires long before.
        buffer_bits: 8e6,
    }
}

fn flow(rng: &mut ChaCha8Rng, flow_id: u32, path: Vec<String>, horizon_ms: u64) -> FlowSpec {
    let start_ms = rng.gen_range(0..200);
    FlowSpec {
        flow_id,
        path,
        start_ms,
        end_ms: horizon_ms - DRAIN_MS,
        initial_window_bits: MSS * rng.gen_range(4..16) as f64,
        size_bits: None,
        on_off: Some(OnOff {
            mean_on_ms: rng.gen_range(45.0..240.0),
            mean_off_ms: rng.gen_range(15.0..120.0),
        }),
    }
}

fn scenario(name: &str, nodes: Vec<String>, links: Vec<Link>, mut flows: Vec<FlowSpec>, shape: Shape) -> Scenario {
    start_near_fair_share(&links, &mut flows, shape.seed);
    Scenario {
        name: name.into(),
        topology: Topology { nodes, links },
        flows,
        params: SimParams::default(),
        seed: shape.seed,
        horizon_ms: shape.horizon_ms,
    }
}

/// Sets each initial window around the flow's share of its bottleneck times
/// its base RTT, so links congest early instead of after a long cubic ramp.
fn start_near_fair_share(links: &[Link], flows: &mut [FlowSpec], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let hop = |f: &FlowSpec, i: usize| {
        links
            .iter()
            .position(|l| l.from == f.path[i] && l.to == f.path[i + 1])
            .expect("generated paths follow links")
    };
    let mut users = vec![0usize; links.len()];
    for f in flows.iter() {
        for i in 0..f.path.len() - 1 {
            users[hop(f, i)] += 1;
        }
    }
    for f in flows.iter_mut() {
        let hops: Vec<usize> = (0..f.path.len() - 1).map(|i| hop(f, i)).collect();
        let share = hops
            .iter()
            .map(|&l| links[l].capacity_bps / users[l] as f64)
            .fold(f64::INFINITY, f64::min);
        let rtt_s = 2e-3 * hops.iter().map(|&l| links[l].delay_ms).sum::<f64>();
        let segments = (rng.gen_range(1.0..2.5) * share * rtt_s / MSS).round().max(4.0);
        f.initial_window_bits = segments * MSS;
    }
}

/// Eight routers in a chain; every flow crosses five consecutive ones, so
/// flows overlap on different stretches and each link sees its own mix.
pub fn line5(shape: Shape) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(shape.seed);
    let routers = 8;
    let nodes: Vec<String> = (0..routers).map(|i| format!("r{i}")).collect();
    let links = (0..routers - 1)
        .map(|i| {
            let cap = 1e6 * rng.gen_range(60..160) as f64;
            let delay = rng.gen_range(1..=2) as f64;
            link(&nodes[i], &nodes[i + 1], cap, delay)
        })
        .collect();
    let flows = (0..shape.flows)
        .map(|k| {
            let s = k % (routers - 4);
            let path = nodes[s..s + 5].to_vec();
            flow(&mut rng, k as u32, path, shape.horizon_ms)
        })
        .collect();
    scenario("line5", nodes, links, flows, shape)
}

/// A 4x4 grid with XY routing; path lengths cycle through 2..=7 nodes.
pub fn mesh27(shape: Shape) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(shape.seed);
    let side = 4usize;
    let name = |r: usize, c: usize| format!("g{r}{c}");
    let nodes: Vec<String> = (0..side).flat_map(|r| (0..side).map(move |c| name(r, c))).collect();
    let mut links = Vec::new();
    for r in 0..side {
        for c in 0..side {
            let mut adj = Vec::new();
            if c + 1 < side {
                adj.push((r, c + 1));
            }
            if r + 1 < side {
                adj.push((r + 1, c));
            }
            for (r2, c2) in adj {
                let cap = 1e6 * rng.gen_range(60..160) as f64;
                links.push(link(&name(r, c), &name(r2, c2), cap, 1.0));
                links.push(link(&name(r2, c2), &name(r, c), cap, 1.0));
            }
        }
    }
    let flows = (0..shape.flows)
        .map(|k| {
            let hops = 1 + k % 6;
            let dx = rng.gen_range(hops.saturating_sub(side - 1)..=hops.min(side - 1));
            let dy = hops - dx;
            let (r0, c0) = (rng.gen_range(0..side - dy), rng.gen_range(0..side - dx));
            let (flip_r, flip_c) = (rng.gen_bool(0.5), rng.gen_bool(0.5));
            let row = |i: usize| if flip_r { side - 1 - (r0 + i) } else { r0 + i };
            let col = |i: usize| if flip_c { side - 1 - (c0 + i) } else { c0 + i };
            let mut path: Vec<String> = (0..=dx).map(|i| name(row(0), col(i))).collect();
            path.extend((1..=dy).map(|i| name(row(i), col(dx))));
            flow(&mut rng, k as u32, path, shape.horizon_ms)
        })
        .collect();
    scenario("mesh27", nodes, links, flows, shape)
}

/// Two pods of two edge and two aggregation switches under two cores.
/// Cross-pod flows take five nodes, in-pod flows three.
pub fn fabric3(shape: Shape) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(shape.seed);
    let edge = |p: usize, i: usize| format!("e{p}{i}");
    let agg = |p: usize, i: usize| format!("a{p}{i}");
    let core = |i: usize| format!("c{i}");
    let mut nodes = Vec::new();
    for p in 0..2 {
        for i in 0..2 {
            nodes.push(edge(p, i));
            nodes.push(agg(p, i));
        }
    }
    nodes.extend((0..2).map(core));
    let mut links = Vec::new();
    let mut both = |a: String, b: String, cap: f64| {
        links.push(link(&a, &b, cap, 1.0));
        links.push(link(&b, &a, cap, 1.0));
    };
    for p in 0..2 {
        for e in 0..2 {
            for a in 0..2 {
                both(edge(p, e), agg(p, a), 100e6);
            }
        }
        for a in 0..2 {
            both(agg(p, a), core(a), 200e6);
        }
    }
    let flows = (0..shape.flows)
        .map(|k| {
            let p = rng.gen_range(0..2);
            let e = rng.gen_range(0..2);
            let a = rng.gen_range(0..2);
            let path = if k % 4 == 3 {
                vec![edge(p, e), agg(p, a), edge(p, 1 - e)]
            } else {
                let e2 = rng.gen_range(0..2);
                vec![edge(p, e), agg(p, a), core(a), agg(1 - p, a), edge(1 - p, e2)]
            };
            flow(&mut rng, k as u32, path, shape.horizon_ms)
        })
        .collect();
    scenario("fabric3", nodes, links, flows, shape)
}
