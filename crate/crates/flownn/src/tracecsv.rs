//! Trace CSV: one row per (ms, node) with the delay on the destination row
//! only.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use flownn_core::trace::{FlowTrace, NodeSeries};

use crate::error::{Error, Result};

pub const HEADER: &str = "time_ms,flow_id,node_index,node_id,send_rate_bps,recv_rate_bps,bg_rate_bps,delay_ms";

/// File name used for a flow inside a trace directory.
pub fn file_name(flow_id: u32) -> String {
    format!("flow_{flow_id:04}.csv")
}

pub fn to_csv(trace: &FlowTrace) -> String {
    let l = trace.path_len();
    let mut out = String::with_capacity(trace.len() * l * 48 + HEADER.len() + 1);
    out.push_str(HEADER);
    out.push('\n');
    for t in 0..trace.len() {
        for (n, node) in trace.nodes.iter().enumerate() {
            let delay = if n + 1 == l { trace.delay_ms[t].to_string() } else { String::new() };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                trace.start_ms + t as u64,
                trace.flow_id,
                n,
                trace.path[n],
                node.send_rate[t],
                node.recv_rate[t],
                node.bg_rate[t],
                delay
            ));
        }
    }
    out
}

/// Writes one CSV per flow into `dir`, returning the paths in flow order.
pub fn write_dir(dir: &Path, traces: &[FlowTrace]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    traces
        .iter()
        .map(|t| {
            let p = dir.join(file_name(t.flow_id));
            crate::io::write_atomic(&p, to_csv(t).as_bytes())?;
            Ok(p)
        })
        .collect()
}

#[derive(Default)]
struct Partial {
    ids: BTreeMap<usize, String>,
    rows: BTreeMap<u64, BTreeMap<usize, [f64; 3]>>,
    delay: BTreeMap<u64, f64>,
}

fn parse_err(path: &Path, line: u64, detail: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        detail: detail.into(),
    }
}

/// Parses trace CSV text. `path` is only used in error messages.
pub fn parse(path: &Path, text: &str) -> Result<Vec<FlowTrace>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut records = rdr.records();
    match records.next() {
        Some(Ok(h)) if h.iter().collect::<Vec<_>>().join(",") == HEADER => {}
        Some(Err(e)) => return Err(parse_err(path, 1, e.to_string())),
        _ => return Err(parse_err(path, 1, format!("header must be {HEADER}"))),
    }
    let mut flows: BTreeMap<u32, Partial> = BTreeMap::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 8 {
            return Err(parse_err(path, line, format!("expected 8 fields, found {}", rec.len())));
        }
        let num = |i: usize, name: &str| -> Result<f64> {
            rec[i]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(path, line, format!("{name}: not a number: {:?}", &rec[i])))
        };
        let int = |i: usize, name: &str| -> Result<u64> {
            rec[i]
                .trim()
                .parse::<u64>()
                .map_err(|_| parse_err(path, line, format!("{name}: not a non-negative integer: {:?}", &rec[i])))
        };
        let t = int(0, "time_ms")?;
        let flow = u32::try_from(int(1, "flow_id")?).map_err(|_| parse_err(path, line, "flow_id out of range"))?;
        let n = int(2, "node_index")? as usize;
        let node_id = rec[3].to_string();
        let rates = [num(4, "send_rate_bps")?, num(5, "recv_rate_bps")?, num(6, "bg_rate_bps")?];
        let p = flows.entry(flow).or_default();
        if let Some(prev) = p.ids.insert(n, node_id.clone()) {
            if prev != node_id {
                return Err(parse_err(path, line, format!("node {n} of flow {flow} named both {prev} and {node_id}")));
            }
        }
        if p.rows.entry(t).or_default().insert(n, rates).is_some() {
            return Err(parse_err(path, line, format!("duplicate row for flow {flow} node {n} at t={t}")));
        }
        if !rec[7].trim().is_empty() {
            p.delay.insert(t, num(7, "delay_ms")?);
        }
    }
    flows.into_iter().map(|(id, p)| assemble(id, p)).collect()
}

fn assemble(flow: u32, p: Partial) -> Result<FlowTrace> {
    let l = p.ids.len();
    if p.ids.keys().copied().ne(0..l) {
        return Err(Error::Core(flownn_core::Error::Validation(format!(
            "flow {flow}: node indices are not contiguous from 0"
        ))));
    }
    let start = *p.rows.keys().next().expect("flow has rows");
    let mut nodes: Vec<NodeSeries> = (0..l).map(|_| NodeSeries::default()).collect();
    let mut delay = Vec::with_capacity(p.rows.len());
    for (i, (&t, row)) in p.rows.iter().enumerate() {
        let expect = start + i as u64;
        if t != expect {
            return Err(Error::Core(flownn_core::Error::Validation(format!("flow {flow}: gap at t={expect}"))));
        }
        if row.len() != l {
            let missing = (0..l).find(|n| !row.contains_key(n)).unwrap_or(0);
            return Err(Error::Core(flownn_core::Error::Validation(format!(
                "flow {flow}: node {missing} missing at t={t}"
            ))));
        }
        for (n, r) in row.values().enumerate() {
            nodes[n].send_rate.push(r[0]);
            nodes[n].recv_rate.push(r[1]);
            nodes[n].bg_rate.push(r[2]);
        }
        let d = p
            .delay
            .get(&t)
            .ok_or_else(|| {
                flownn_core::Error::Validation(format!("flow {flow}: no delay_ms on the destination row at t={t}"))
            })?;
        delay.push(*d);
    }
    let route = p.ids.into_values().collect();
    Ok(FlowTrace::new(flow, route, start, nodes, delay)?)
}

pub fn read_file(path: &Path) -> Result<Vec<FlowTrace>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(path, &text)
}

/// Reads every `*.csv` in `dir` (sorted by name), or a single file.
pub fn read_path(path: &Path) -> Result<Vec<FlowTrace>> {
    if !path.is_dir() {
        return read_file(path);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for f in files {
        out.extend(read_file(&f)?);
    }
    out.sort_by_key(|t| t.flow_id);
    if let Some(w) = out.windows(2).find(|w| w[0].flow_id == w[1].flow_id) {
        return Err(Error::Usage(format!("flow {} appears in more than one file", w[0].flow_id)));
    }
    Ok(out)
}
