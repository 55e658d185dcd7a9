use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cubic::{on_congestion_event, CubicState};
use super::queue::{Chunk, LinkQueue};
use super::{Compiled, Scenario, SimParams};
use crate::error::Result;
use crate::trace::{FlowTrace, NodeSeries};

#[derive(Debug, Clone)]
struct FlowState {
    cubic: CubicState,
    srtt: f64,
    base_rtt: f64,
    base_owd_ticks: u64,
    last_event: f64,
    events: u64,
    credit: f64,
    remaining: f64,
    on: bool,
    next_toggle_ms: u64,
    off_since_ms: u64,
    rng: ChaCha8Rng,
    dropped: bool,
    lost_bits: f64,
    tick_bits: f64,
    tick_owd: f64,
    send_ms: Vec<f64>,
    recv_ms: Vec<f64>,
    delivered_ms: f64,
    owd_ms: f64,
    last_delay_ms: f64,
    out: Vec<NodeSeries>,
    delay: Vec<f64>,
}

/// Tick-level simulator state. [`run`] drives it to the horizon.
#[derive(Debug, Clone)]
pub struct Simulator {
    scenario: Scenario,
    compiled: Compiled,
    queues: Vec<LinkQueue>,
    in_flight: Vec<VecDeque<(u64, Chunk)>>,
    flows: Vec<FlowState>,
    /// Per node, the (flow, path position) pairs traversing it.
    members: Vec<Vec<(usize, usize)>>,
    tick: u64,
    horizon_ticks: u64,
}

fn draw_period(rng: &mut ChaCha8Rng, mean_ms: f64) -> u64 {
    let u: f64 = rng.gen();
    let d = -libm::log(1.0 - u) * mean_ms;
    (libm::round(d) as u64).max(1)
}

impl Simulator {
    pub fn new(scenario: &Scenario, seed: u64) -> Result<Self> {
        let compiled = scenario.compile()?;
        let p = scenario.params;
        let tick_s = p.tick_s();
        let horizon = scenario.horizon_ms as usize;
        let queues = compiled
            .links
            .iter()
            .map(|l| LinkQueue::new(l.capacity_per_tick, l.buffer_bits))
            .collect();
        let mut members = vec![Vec::new(); compiled.node_count];
        let mut flows = Vec::with_capacity(scenario.flows.len());
        for (fi, spec) in scenario.flows.iter().enumerate() {
            for (pos, &n) in compiled.node_paths[fi].iter().enumerate() {
                members[n].push((fi, pos));
            }
            let owd: u64 = compiled.routes[fi].iter().map(|&l| compiled.links[l].delay_ticks).sum();
            let base_rtt = 2.0 * owd as f64 * tick_s;
            let start_s = spec.start_ms as f64 * 1e-3;
            let cubic = CubicState::at_plateau(
                spec.initial_window_bits,
                p.cubic_c * p.mss_bits,
                p.cubic_beta,
                p.floor_window_bits,
                start_s,
            );
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(u64::from(spec.flow_id));
            let next_toggle_ms = match spec.on_off {
                Some(o) => spec.start_ms + draw_period(&mut rng, o.mean_on_ms),
                None => u64::MAX,
            };
            let len = spec.path.len();
            flows.push(FlowState {
                cubic,
                srtt: base_rtt,
                base_rtt,
                base_owd_ticks: owd,
                last_event: f64::NEG_INFINITY,
                events: 0,
                credit: 0.0,
                remaining: spec.size_bits.unwrap_or(f64::INFINITY),
                on: true,
                off_since_ms: 0,
                next_toggle_ms,
                rng,
                dropped: false,
                lost_bits: 0.0,
                tick_bits: 0.0,
                tick_owd: 0.0,
                send_ms: vec![0.0; len],
                recv_ms: vec![0.0; len],
                delivered_ms: 0.0,
                owd_ms: 0.0,
                last_delay_ms: owd as f64 / p.ticks_per_ms as f64,
                out: (0..len).map(|_| NodeSeries::zeros(horizon)).collect(),
                delay: vec![0.0; horizon],
            });
        }
        Ok(Self {
            in_flight: vec![VecDeque::new(); compiled.links.len()],
            scenario: scenario.clone(),
            compiled,
            queues,
            flows,
            members,
            tick: 0,
            horizon_ticks: scenario.horizon_ms * u64::from(p.ticks_per_ms),
        })
    }

    pub fn params(&self) -> &SimParams {
        &self.scenario.params
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn now_s(&self) -> f64 {
        self.tick as f64 * self.scenario.params.tick_s()
    }

    pub fn is_done(&self) -> bool {
        self.tick >= self.horizon_ticks
    }

    pub fn cubic_state(&self, flow: usize) -> &CubicState {
        &self.flows[flow].cubic
    }

    /// Current congestion window of a flow, in bits.
    pub fn window(&self, flow: usize) -> f64 {
        self.flows[flow].cubic.window_at(self.now_s())
    }

    pub fn congestion_events(&self, flow: usize) -> u64 {
        self.flows[flow].events
    }

    /// Bits of `flow` tail-dropped so far.
    pub fn dropped_bits(&self, flow: usize) -> f64 {
        self.flows[flow].lost_bits
    }

    pub fn smoothed_rtt(&self, flow: usize) -> f64 {
        self.flows[flow].srtt
    }

    pub fn queue(&self, link: usize) -> &LinkQueue {
        &self.queues[link]
    }

    /// Bits queued or propagating anywhere in the network.
    pub fn bits_in_network(&self) -> f64 {
        let queued: f64 = self.queues.iter().map(LinkQueue::backlog).sum();
        let flying: f64 = self.in_flight.iter().flat_map(|q| q.iter().map(|(_, c)| c.bits)).sum();
        queued + flying
    }

    fn enqueue(&mut self, link: usize, chunk: Chunk) {
        let lost = self.queues[link].enqueue(chunk);
        if lost > 0.0 {
            self.flows[chunk.flow].dropped = true;
            self.flows[chunk.flow].lost_bits += lost;
        }
    }

    /// Advances one tick: inject, deliver arrivals, serve queues, update RTT
    /// and windows, then close the millisecond sample if it ended.
    pub fn step(&mut self) {
        let k = self.tick;
        let p = self.scenario.params;
        let tpm = u64::from(p.ticks_per_ms);
        let ms = k / tpm;
        let tick_s = p.tick_s();
        let now = k as f64 * tick_s;

        if k % tpm == 0 {
            self.toggle_sources(ms);
        }

        for fi in 0..self.flows.len() {
            let spec = &self.scenario.flows[fi];
            let f = &mut self.flows[fi];
            f.dropped = false;
            f.tick_bits = 0.0;
            f.tick_owd = 0.0;
            let active = ms >= spec.start_ms && ms < spec.end_ms && f.on && f.remaining > 0.0;
            if !active {
                f.credit = 0.0;
                continue;
            }
            let w = f.cubic.window_at(now);
            f.credit = (f.credit + w / f.srtt * tick_s).min(w.max(p.mss_bits));
            let mut bits = libm::floor(f.credit / p.mss_bits) * p.mss_bits;
            if bits >= f.remaining {
                bits = f.remaining;
                f.credit = 0.0;
            } else {
                f.credit -= bits;
            }
            if bits > 0.0 {
                f.remaining -= bits;
                f.recv_ms[0] += bits;
                let link = self.compiled.routes[fi][0];
                self.enqueue(link, Chunk { flow: fi, hop: 0, bits, born_tick: k });
            }
        }

        for l in 0..self.in_flight.len() {
            while let Some(&(at, c)) = self.in_flight[l].front() {
                if at > k {
                    break;
                }
                self.in_flight[l].pop_front();
                let next = c.hop + 1;
                let f = &mut self.flows[c.flow];
                f.recv_ms[next] += c.bits;
                if next == self.compiled.routes[c.flow].len() {
                    f.tick_bits += c.bits;
                    f.tick_owd += c.bits * (k - c.born_tick) as f64;
                } else {
                    let link = self.compiled.routes[c.flow][next];
                    self.enqueue(link, Chunk { hop: next, ..c });
                }
            }
        }

        for l in 0..self.queues.len() {
            let at = k + self.compiled.links[l].delay_ticks;
            let flows = &mut self.flows;
            let flight = &mut self.in_flight[l];
            self.queues[l].serve(|c| {
                flows[c.flow].send_ms[c.hop] += c.bits;
                flight.push_back((at, c));
            });
        }

        for f in &mut self.flows {
            if f.tick_bits > 0.0 {
                f.delivered_ms += f.tick_bits;
                f.owd_ms += f.tick_owd;
                let owd_ticks = f.tick_owd / f.tick_bits;
                let sample = (owd_ticks + f.base_owd_ticks as f64) * tick_s;
                f.srtt += p.srtt_gain * (sample - f.srtt);
            }
            let rtt = f.srtt.max(tick_s);
            let congested = f.dropped || f.srtt > p.rtt_threshold * f.base_rtt;
            if congested && now - f.last_event >= rtt {
                let w = f.cubic.window_at(now);
                f.cubic = on_congestion_event(&f.cubic, w, now);
                f.last_event = now;
                f.events += 1;
            }
        }

        self.tick += 1;
        if self.tick % tpm == 0 {
            self.close_sample(ms as usize);
        }
    }

    fn toggle_sources(&mut self, ms: u64) {
        for (spec, f) in self.scenario.flows.iter().zip(&mut self.flows) {
            let Some(o) = spec.on_off else { continue };
            while ms >= f.next_toggle_ms {
                f.on = !f.on;
                // The window does not grow while the source is idle.
                if f.on {
                    f.cubic.epoch_start += (ms - f.off_since_ms) as f64 * 1e-3;
                } else {
                    f.off_since_ms = ms;
                }
                let mean = if f.on { o.mean_on_ms } else { o.mean_off_ms };
                f.next_toggle_ms += draw_period(&mut f.rng, mean);
            }
        }
    }

    fn close_sample(&mut self, m: usize) {
        let tick_ms = 1.0 / self.scenario.params.ticks_per_ms as f64;
        for f in &mut self.flows {
            let last = f.out.len() - 1;
            for pos in 0..=last {
                let recv = f.recv_ms[pos] * 1e3;
                let send = if pos == last { recv } else { f.send_ms[pos] * 1e3 };
                f.out[pos].recv_rate[m] = recv;
                f.out[pos].send_rate[m] = send;
                f.recv_ms[pos] = 0.0;
                f.send_ms[pos] = 0.0;
            }
            if f.delivered_ms > 0.0 {
                f.last_delay_ms = f.owd_ms / f.delivered_ms * tick_ms;
            }
            f.delay[m] = f.last_delay_ms;
            f.delivered_ms = 0.0;
            f.owd_ms = 0.0;
        }
        for (fi, path) in self.compiled.node_paths.iter().enumerate() {
            for (pos, &node) in path.iter().enumerate() {
                let mut bg = 0.0;
                for &(g, q) in &self.members[node] {
                    if g != fi {
                        bg += self.flows[g].out[q].send_rate[m];
                    }
                }
                self.flows[fi].out[pos].bg_rate[m] = bg;
            }
        }
    }

    pub fn run_to_end(&mut self) {
        while !self.is_done() {
            self.step();
        }
    }

    /// Telemetry recorded so far, as full-horizon traces starting at 0 ms.
    pub fn traces(&self) -> Result<Vec<FlowTrace>> {
        self.scenario
            .flows
            .iter()
            .zip(&self.flows)
            .map(|(spec, f)| FlowTrace::new(spec.flow_id, spec.path.clone(), 0, f.out.clone(), f.delay.clone()))
            .collect()
    }

    pub fn into_traces(self) -> Result<Vec<FlowTrace>> {
        let Self { scenario, flows, .. } = self;
        scenario
            .flows
            .into_iter()
            .zip(flows)
            .map(|(spec, f)| FlowTrace::new(spec.flow_id, spec.path, 0, f.out, f.delay))
            .collect()
    }
}

/// Simulates `scenario` to its horizon. Deterministic in `(scenario, seed)`.
pub fn run(scenario: &Scenario, seed: u64) -> Result<Vec<FlowTrace>> {
    let mut sim = Simulator::new(scenario, seed)?;
    sim.run_to_end();
    sim.into_traces()
}
