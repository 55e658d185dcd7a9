//! Experiment harness: simulate, build the dataset, train every requested
//! model per seed and write the report bundle.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use flownn_core::netsim::{run, Scenario};
use flownn_core::trace::FlowTrace;
use flownn_core::train::{EpochLog, FinetuneLog, Network, Task, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::dataset::{self, DatasetConfig, DatasetManifest, Examples};
use crate::error::{Error, Result};
use crate::io::{digest, read_json, to_json, write_atomic, write_json};
use crate::pipeline::{self, ArimaOrder, FitLog, ModelKind, ModelSpec};
use crate::scenarios::{self, Shape};

/// A bundled generator (with optional overrides) or a scenario JSON file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioRef {
    /// Bundled name or path, relative to the spec file.
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ScenarioRef {
    pub fn resolve(&self, base: &Path) -> Result<Scenario> {
        if let Some(mut shape) = Shape::default_for(&self.name) {
            shape.flows = self.flows.unwrap_or(shape.flows);
            shape.horizon_ms = self.horizon_ms.unwrap_or(shape.horizon_ms);
            shape.seed = self.seed.unwrap_or(shape.seed);
            return scenarios::generate(&self.name, shape);
        }
        if self.flows.is_some() || self.horizon_ms.is_some() || self.seed.is_some() {
            return Err(Error::Usage(format!(
                "scenario {}: overrides apply to bundled scenarios only",
                self.name
            )));
        }
        let s: Scenario = read_json(&base.join(&self.name))?;
        s.validate()?;
        Ok(s)
    }
}

/// Frozen-backbone transfer to a second environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodSpec {
    pub scenario: ScenarioRef,
    #[serde(default)]
    pub dataset: DatasetConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub name: String,
    pub scenario: ScenarioRef,
    pub dataset: DatasetConfig,
    /// Settings shared by every neural model; `kind` is ignored.
    pub model: ModelSpec,
    pub models: Vec<ModelKind>,
    pub tasks: Vec<Task>,
    pub seeds: Vec<u64>,
    /// FlowNN recurrent iterations to sweep.
    pub iterations: Vec<usize>,
    /// Target horizons to sweep.
    pub deltas: Vec<usize>,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    /// Readout training for the delay and out-of-distribution protocols.
    pub readout: TrainConfig,
    pub arima: ArimaOrder,
    pub ood: Option<OodSpec>,
    /// Write trained FlowNN checkpoints into the bundle.
    pub save_checkpoints: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            scenario: ScenarioRef {
                name: "line5".into(),
                flows: None,
                horizon_ms: None,
                seed: None,
            },
            dataset: DatasetConfig::default(),
            model: ModelSpec::default(),
            models: vec![ModelKind::Naive, ModelKind::Arima, ModelKind::Gru, ModelKind::Mgru, ModelKind::Flownn],
            tasks: vec![Task::Rate],
            seeds: vec![1, 2, 3],
            iterations: vec![2],
            deltas: vec![1],
            pretrain: TrainConfig::default(),
            finetune: TrainConfig::default(),
            readout: TrainConfig::default(),
            arima: ArimaOrder::default(),
            ood: None,
            save_checkpoints: false,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Usage(format!("experiment {}: {m}", self.name)));
        if self.seeds.is_empty() {
            return bad("seeds is empty".into());
        }
        if self.iterations.is_empty() || self.iterations.iter().any(|&n| !(1..=5).contains(&n)) {
            return bad(format!("iterations must be a non-empty list within 1..=5, got {:?}", self.iterations));
        }
        if self.deltas.is_empty() || self.deltas.contains(&0) {
            return bad(format!("deltas must be a non-empty list of positive steps, got {:?}", self.deltas));
        }
        if self.models.is_empty() || self.tasks.is_empty() {
            return bad("models and tasks must be non-empty".into());
        }
        if self.tasks.contains(&Task::Delay) && !self.models.contains(&ModelKind::Flownn) {
            return bad("the delay transfer protocol needs flownn in models".into());
        }
        Ok(())
    }

    fn model_label(&self, kind: ModelKind, n: usize) -> String {
        if kind == ModelKind::Flownn && self.iterations.len() > 1 {
            format!("flownn-N{n}")
        } else {
            kind.as_str().to_string()
        }
    }

    fn task_label(&self, task: Task, delta: usize) -> String {
        if self.deltas.len() > 1 {
            format!("{}-d{delta}", task.as_str())
        } else {
            task.as_str().to_string()
        }
    }
}

/// One metric line of the bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub task: String,
    pub split: String,
    pub seed: u64,
    pub delta: usize,
    pub iterations: Option<usize>,
    pub mse: f64,
    pub rse: f64,
    pub corr: f64,
    pub count: usize,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub model: String,
    pub task: String,
    pub seed: u64,
    pub pretrain: Vec<EpochLog>,
    pub finetune: Option<FinetuneLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub task: String,
    pub split: String,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenCheck {
    pub model: String,
    pub seed: u64,
    pub protocol: String,
    pub backbone_unchanged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub spec_digest: String,
    pub spec: ExperimentSpec,
    pub traces_sha256: String,
    pub split: flownn_core::trace::DatasetSplit,
    pub path_len: usize,
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub frozen_checks: Vec<FrozenCheck>,
}

struct Prepared {
    traces: Vec<FlowTrace>,
    manifest: DatasetManifest,
    /// Examples per delta.
    examples: BTreeMap<usize, Examples>,
}

fn prepare(scenario: &Scenario, cfg: &DatasetConfig, deltas: &[usize]) -> Result<Prepared> {
    let traces = run(scenario, scenario.seed)?;
    let manifest = dataset::build(Path::new(&scenario.name), &traces, cfg)?;
    let mut examples = BTreeMap::new();
    for &d in deltas {
        examples.insert(d, manifest.examples(&traces, d)?);
    }
    Ok(Prepared {
        traces,
        manifest,
        examples,
    })
}

#[derive(Default)]
struct SeedOutput {
    rows: Vec<ResultRow>,
    logs: Vec<TrainingLog>,
    frozen: Vec<FrozenCheck>,
    checkpoints: Vec<(String, Network)>,
}

struct Ctx<'a> {
    spec: &'a ExperimentSpec,
    data: &'a Prepared,
    ood: Option<&'a Prepared>,
}

fn seeded(cfg: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig { seed, ..*cfg }
}

fn stage<T>(label: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(label))
}

impl SeedOutput {
    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, model: &str, task: &str, split: &str, seed: u64, delta: usize, n: Option<usize>, r: &flownn_core::train::MetricReport) {
        self.rows.push(ResultRow {
            model: model.into(),
            task: task.into(),
            split: split.into(),
            seed,
            delta,
            iterations: n,
            mse: r.mse,
            rse: r.rse,
            corr: r.corr,
            count: r.count,
            degenerate: r.degenerate,
        });
    }
}

fn run_seed(ctx: &Ctx, seed: u64) -> Result<SeedOutput> {
    let spec = ctx.spec;
    let data = ctx.data;
    let window = data.manifest.config.window.window;
    let l = data.manifest.path_len;
    let mut out = SeedOutput::default();
    // rate-trained models of the first delta, reused by the transfer protocols
    let mut rate_models: BTreeMap<(ModelKind, usize), Network> = BTreeMap::new();
    let first_delta = spec.deltas[0];

    for &delta in &spec.deltas {
        let ex = &data.examples[&delta];
        let rate_label = spec.task_label(Task::Rate, delta);
        let mut eval_splits: Vec<(&str, &[flownn_core::train::Example])> = vec![("test", &ex.test)];
        if !ex.unseen.is_empty() {
            eval_splits.push(("unseen", &ex.unseen));
        }
        if spec.tasks.contains(&Task::Rate) {
            for &kind in &spec.models {
                let ns: Vec<usize> = if kind == ModelKind::Flownn { spec.iterations.clone() } else { vec![spec.model.iterations] };
                for n in ns {
                    let label = spec.model_label(kind, n);
                    let where_ = format!("seed {seed} / {label} / {rate_label}");
                    let iterations = (kind == ModelKind::Flownn).then_some(n);
                    if !kind.is_neural() || kind == ModelKind::Raw {
                        if kind == ModelKind::Raw {
                            continue;
                        }
                        for (split, set) in &eval_splits {
                            let p = stage(&where_, pipeline::classic_predictions(kind, spec.arima, &data.traces, &data.manifest, set))?;
                            let r = stage(&where_, pipeline::evaluate_predictions(Task::Rate, set, &p))?;
                            out.push(&label, &rate_label, split, seed, delta, None, &r);
                        }
                        continue;
                    }
                    let model_spec = ModelSpec { kind, iterations: n, ..spec.model };
                    let mut net = stage(&where_, pipeline::network(&model_spec, l, window, seed))?;
                    let log: FitLog = stage(
                        &where_,
                        pipeline::fit_rate(&mut net, ex, &seeded(&spec.pretrain, seed), &seeded(&spec.finetune, seed)),
                    )?;
                    out.logs.push(TrainingLog {
                        model: label.clone(),
                        task: rate_label.clone(),
                        seed,
                        pretrain: log.pretrain,
                        finetune: log.finetune,
                    });
                    for (split, set) in &eval_splits {
                        let r = stage(&where_, pipeline::evaluate_model(&net, Task::Rate, set))?;
                        out.push(&label, &rate_label, split, seed, delta, iterations, &r);
                    }
                    if spec.save_checkpoints && kind == ModelKind::Flownn {
                        out.checkpoints.push((format!("{label}-{rate_label}-seed{seed}"), net.clone()));
                    }
                    if delta == first_delta && n == spec.iterations[0] {
                        rate_models.insert((kind, n), net);
                    }
                }
            }
        }

        if spec.tasks.contains(&Task::Delay) {
            let n = spec.iterations[0];
            let delay_label = spec.task_label(Task::Delay, delta);
            let label = spec.model_label(ModelKind::Flownn, n);
            let where_ = format!("seed {seed} / {label} / {delay_label}");
            // backbone pretrained on rates only; delay never enters it
            let mut net = match rate_models.get(&(ModelKind::Flownn, n)) {
                Some(m) if delta == first_delta => m.clone(),
                _ => {
                    let ms = ModelSpec { kind: ModelKind::Flownn, iterations: n, ..spec.model };
                    let mut m = stage(&where_, pipeline::network(&ms, l, window, seed))?;
                    let ex1 = &data.examples[&delta];
                    stage(&where_, pipeline::fit_rate(&mut m, ex1, &seeded(&spec.pretrain, seed), &seeded(&spec.finetune, seed)))?;
                    m
                }
            };
            let before = pipeline::backbone_digest(&net);
            let ft = stage(&where_, pipeline::fit_readout(&mut net, Task::Delay, true, &ex.train, &ex.val, &seeded(&spec.readout, seed)))?;
            out.frozen.push(FrozenCheck {
                model: label.clone(),
                seed,
                protocol: "delay".into(),
                backbone_unchanged: before == pipeline::backbone_digest(&net),
            });
            out.logs.push(TrainingLog {
                model: label.clone(),
                task: delay_label.clone(),
                seed,
                pretrain: Vec::new(),
                finetune: Some(ft),
            });
            let r = stage(&where_, pipeline::evaluate_model(&net, Task::Delay, &ex.test))?;
            out.push(&label, &delay_label, "test", seed, delta, Some(n), &r);

            let where_ = format!("seed {seed} / raw / {delay_label}");
            let raw_spec = ModelSpec { kind: ModelKind::Raw, ..spec.model };
            let mut raw = stage(&where_, pipeline::network(&raw_spec, l, window, seed))?;
            let ft = stage(&where_, pipeline::fit_readout(&mut raw, Task::Delay, false, &ex.train, &ex.val, &seeded(&spec.readout, seed)))?;
            out.logs.push(TrainingLog {
                model: "raw".into(),
                task: delay_label.clone(),
                seed,
                pretrain: Vec::new(),
                finetune: Some(ft),
            });
            let r = stage(&where_, pipeline::evaluate_model(&raw, Task::Delay, &ex.test))?;
            out.push("raw", &delay_label, "test", seed, delta, None, &r);
        }
    }

    if let Some(ood) = ctx.ood {
        let ex = &ood.examples[&spec.deltas[0]];
        let n = spec.iterations[0];
        for kind in [ModelKind::Mgru, ModelKind::Flownn] {
            let Some(trained) = rate_models.get(&(kind, n)) else { continue };
            let label = spec.model_label(kind, n);
            let where_ = format!("seed {seed} / {label} / ood");
            let mut net = trained.clone();
            let before = pipeline::backbone_digest(&net);
            let ft = stage(&where_, pipeline::fit_readout(&mut net, Task::Rate, true, &ex.train, &ex.val, &seeded(&spec.readout, seed)))?;
            out.frozen.push(FrozenCheck {
                model: label.clone(),
                seed,
                protocol: "ood".into(),
                backbone_unchanged: before == pipeline::backbone_digest(&net),
            });
            out.logs.push(TrainingLog {
                model: label.clone(),
                task: "rate-ood".into(),
                seed,
                pretrain: Vec::new(),
                finetune: Some(ft),
            });
            let r = stage(&where_, pipeline::evaluate_model(&net, Task::Rate, &ex.test))?;
            let iterations = (kind == ModelKind::Flownn).then_some(n);
            out.push(&label, &spec.task_label(Task::Rate, spec.deltas[0]), "ood", seed, spec.deltas[0], iterations, &r);
        }
    }
    Ok(out)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Mean and sample standard deviation over seeds per model, task, split and
/// metric, in first-appearance order.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String, String), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        let k = (r.model.clone(), r.task.clone(), r.split.clone());
        if !groups.contains_key(&k) {
            order.push(k.clone());
        }
        groups.entry(k).or_default().push(r);
    }
    let mut out = Vec::new();
    for k in order {
        let g = &groups[&k];
        for (metric, get) in [
            ("mse", (|r: &ResultRow| r.mse) as fn(&ResultRow) -> f64),
            ("rse", |r| r.rse),
            ("corr", |r| r.corr),
        ] {
            let v: Vec<f64> = g.iter().map(|r| get(r)).collect();
            let (mean, std) = mean_std(&v);
            out.push(SummaryRow {
                model: k.0.clone(),
                task: k.1.clone(),
                split: k.2.clone(),
                metric: metric.into(),
                n: v.len(),
                mean,
                std,
            });
        }
    }
    out
}

pub const METRICS_HEADER: &str = "model,task,split,seed,mse,rse,corr";

pub fn metrics_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!("{},{},{},{},{},{},{}\n", r.model, r.task, r.split, r.seed, r.mse, r.rse, r.corr));
    }
    s
}

fn plot_csv(rows: &[ResultRow], logs: &[TrainingLog]) -> String {
    let mut s = String::from("kind,model,task,split,seed,delta,iterations,stage,epoch,metric,value\n");
    for r in rows {
        let n = r.iterations.map(|n| n.to_string()).unwrap_or_default();
        for (m, v) in [("mse", r.mse), ("rse", r.rse), ("corr", r.corr)] {
            s.push_str(&format!("metric,{},{},{},{},{},{n},,,{m},{v}\n", r.model, r.task, r.split, r.seed, r.delta));
        }
    }
    for l in logs {
        for e in &l.pretrain {
            s.push_str(&format!("curve,{},{},train,{},,,pretrain,{},ssl_loss,{}\n", l.model, l.task, l.seed, e.epoch, e.train_loss));
        }
        if let Some(f) = &l.finetune {
            for e in &f.epochs {
                s.push_str(&format!("curve,{},{},train,{},,,finetune,{},mse,{}\n", l.model, l.task, l.seed, e.epoch, e.train_loss));
                if let Some(v) = e.val_loss {
                    s.push_str(&format!("curve,{},{},val,{},,,finetune,{},mse,{v}\n", l.model, l.task, l.seed, e.epoch));
                }
            }
        }
    }
    s
}

/// Paths written by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct Bundle {
    pub report: PathBuf,
    pub metrics: PathBuf,
    pub plot: PathBuf,
    pub logs: PathBuf,
    pub checkpoints: Vec<PathBuf>,
}

/// Runs `spec`, with up to `jobs` seeds in parallel, and writes the bundle
/// into `out`. `base` resolves relative scenario paths.
pub fn run_experiment(spec: &ExperimentSpec, base: &Path, out: &Path, jobs: usize) -> Result<(Report, Bundle)> {
    spec.validate()?;
    let scenario = stage("scenario", spec.scenario.resolve(base))?;
    let data = stage("simulate+dataset", prepare(&scenario, &spec.dataset, &spec.deltas))?;
    let ood = match &spec.ood {
        Some(o) => {
            let s = stage("ood scenario", o.scenario.resolve(base))?;
            let p = stage("ood simulate+dataset", prepare(&s, &o.dataset, &spec.deltas[..1]))?;
            if p.manifest.path_len != data.manifest.path_len {
                return Err(Error::Usage(format!(
                    "ood dataset uses L={} but the main dataset uses L={}",
                    p.manifest.path_len, data.manifest.path_len
                )));
            }
            Some(p)
        }
        None => None,
    };
    let ctx = Ctx {
        spec,
        data: &data,
        ood: ood.as_ref(),
    };

    let jobs = jobs.max(1);
    let mut results: Vec<(u64, Result<SeedOutput>)> = Vec::new();
    for chunk in spec.seeds.chunks(jobs) {
        let done: Vec<(u64, Result<SeedOutput>)> = std::thread::scope(|s| {
            let ctx = &ctx;
            let handles: Vec<_> = chunk.iter().map(|&seed| (seed, s.spawn(move || run_seed(ctx, seed)))).collect();
            handles
                .into_iter()
                .map(|(seed, h)| (seed, h.join().unwrap_or_else(|_| Err(Error::Usage(format!("seed {seed}: worker panicked"))))))
                .collect()
        });
        results.extend(done);
    }

    let mut rows = Vec::new();
    let mut logs = Vec::new();
    let mut frozen = Vec::new();
    let mut ckpts = Vec::new();
    let mut failure = None;
    for (_, r) in results {
        match r {
            Ok(o) => {
                rows.extend(o.rows);
                logs.extend(o.logs);
                frozen.extend(o.frozen);
                ckpts.extend(o.checkpoints);
            }
            Err(e) if failure.is_none() => failure = Some(e),
            Err(_) => {}
        }
    }
    if let Some(e) = failure {
        let partial = serde_json::json!({ "rows": rows, "logs": logs, "error": e.to_string() });
        write_atomic(&out.join("partial.json"), to_json(&partial).as_bytes())?;
        return Err(e);
    }

    let report = Report {
        name: spec.name.clone(),
        spec_digest: digest(spec),
        spec: spec.clone(),
        traces_sha256: data.manifest.traces_sha256.clone(),
        split: data.manifest.split.clone(),
        path_len: data.manifest.path_len,
        summary: summarize(&rows),
        rows,
        frozen_checks: frozen,
    };
    let bundle = Bundle {
        report: out.join("report.json"),
        metrics: out.join("metrics.csv"),
        plot: out.join("plot.csv"),
        logs: out.join("logs.json"),
        checkpoints: ckpts.iter().map(|(name, _)| out.join("checkpoints").join(format!("{name}.json"))).collect(),
    };
    write_json(&bundle.report, &report)?;
    write_atomic(&bundle.metrics, metrics_csv(&report.rows).as_bytes())?;
    write_atomic(&bundle.plot, plot_csv(&report.rows, &logs).as_bytes())?;
    write_json(&bundle.logs, &logs)?;
    for ((name, net), path) in ckpts.iter().zip(&bundle.checkpoints) {
        checkpoint::save(path, net, serde_json::json!({ "experiment": spec.name, "run": name }))?;
    }
    Ok((report, bundle))
}

pub const BUNDLED: [&str; 4] = ["compare-desk", "nsweep-desk", "delta-desk", "ood-desk"];

fn desk_base(name: &str) -> ExperimentSpec {
    let train = |epochs| {
        let mut t = TrainConfig {
            epochs,
            batch_size: 32,
            max_batches: Some(60),
            ..TrainConfig::default()
        };
        t.adam.lr = 3e-3;
        t
    };
    ExperimentSpec {
        name: name.into(),
        scenario: ScenarioRef {
            name: "line5".into(),
            flows: Some(10),
            horizon_ms: Some(5000),
            seed: Some(1),
        },
        dataset: DatasetConfig {
            n_unseen: 2,
            seed: 1,
            window: flownn_core::train::WindowSpec {
                window: 16,
                delta: 1,
                stride: 4,
            },
            ..DatasetConfig::default()
        },
        model: ModelSpec {
            iterations: 1,
            ..ModelSpec::default()
        },
        iterations: vec![1],
        pretrain: train(2),
        finetune: train(20),
        readout: train(10),
        ..ExperimentSpec::default()
    }
}

/// Readout-only transfer to the 5-node cross-pod flows of `fabric3`.
fn ood_fabric(base: &DatasetConfig) -> Option<OodSpec> {
    Some(OodSpec {
        scenario: ScenarioRef {
            name: "fabric3".into(),
            flows: Some(16),
            horizon_ms: Some(5000),
            seed: Some(1),
        },
        dataset: DatasetConfig {
            n_unseen: 0,
            path_len: Some(5),
            ..*base
        },
    })
}

/// Desk-scale specs shipped with the tool.
pub fn bundled(name: &str) -> Option<ExperimentSpec> {
    let mut s = desk_base(name);
    match name {
        "compare-desk" => {
            s.tasks = vec![Task::Rate, Task::Delay];
            s.ood = ood_fabric(&s.dataset);
        }
        "nsweep-desk" => {
            s.models = vec![ModelKind::Flownn];
            s.iterations = vec![1, 2, 3];
            s.finetune.epochs = 8;
            s.pretrain.epochs = 1;
        }
        "delta-desk" => {
            s.deltas = vec![1, 4, 8];
        }
        "ood-desk" => {
            s.models = vec![ModelKind::Mgru, ModelKind::Flownn];
            s.ood = ood_fabric(&s.dataset);
        }
        _ => return None,
    }
    Some(s)
}
