//! `flownn` command line.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flownn_core::netsim::{run, Scenario};
use flownn_core::train::{finetune, Example, MetricReport, Task, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::dataset::{self, DatasetConfig, DatasetManifest, Examples};
use crate::error::{Error, Result};
use crate::experiment::{self, ExperimentSpec, ResultRow};
use crate::io::{digest, read_json, to_json, write_atomic, write_json};
use crate::manifest::RunManifest;
use crate::pipeline::{self, ArimaOrder, ModelKind, ModelSpec};
use crate::report;
use crate::scenarios::{self, Shape};
use crate::tracecsv;

#[derive(Debug, Parser)]
#[command(name = "flownn", version, about = "Flow-rate prediction on simulated network traces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a bundled scenario generator's output as JSON.
    Scenario(ScenarioArgs),
    /// Run the simulator and write one CSV per flow.
    Simulate(SimulateArgs),
    /// Split traces and fit normalization.
    Dataset(DatasetArgs),
    /// Initialize a model and run self-supervised pretraining.
    Pretrain(PretrainArgs),
    /// Train a task readout (and the backbone unless frozen).
    Finetune(FinetuneArgs),
    /// Score a checkpoint or a classic baseline.
    Eval(EvalArgs),
    /// Merge metrics CSVs into mean and standard deviation per model.
    Report(ReportArgs),
    /// Run a whole experiment spec over several seeds.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct SeedArg {
    #[arg(long, env = "FLOWNN_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// line5, mesh27 or fabric3.
    pub name: String,
    #[arg(long)]
    pub flows: Option<usize>,
    #[arg(long)]
    pub horizon_ms: Option<u64>,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON file or bundled scenario name.
    pub scenario: String,
    /// Output directory for the trace CSVs.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the scenario's own seed.
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Trace CSV file or directory.
    #[arg(long)]
    pub traces: PathBuf,
    /// Dataset config JSON; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Dataset manifest to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training config JSON; defaults apply when omitted.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Overrides the config's epoch count.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Target horizon in steps.
    #[arg(long, default_value_t = 1)]
    pub delta: usize,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Model spec JSON; a FlowNN with default sizes when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Checkpoint manifest to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TaskArg {
    Rate,
    Delay,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Rate => Task::Rate,
            TaskArg::Delay => Task::Delay,
        }
    }
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "rate")]
    pub task: TaskArg,
    /// Keep the backbone fixed and train a fresh readout only.
    #[arg(long)]
    pub freeze: bool,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Val,
    Test,
    Unseen,
}

impl SplitArg {
    fn as_str(self) -> &'static str {
        match self {
            SplitArg::Val => "val",
            SplitArg::Test => "test",
            SplitArg::Unseen => "unseen",
        }
    }

    fn pick(self, ex: &Examples) -> &[Example] {
        match self {
            SplitArg::Val => &ex.val,
            SplitArg::Test => &ex.test,
            SplitArg::Unseen => &ex.unseen,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ClassicArg {
    Naive,
    Arima,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Trained checkpoint to score.
    #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
    pub checkpoint: Option<PathBuf>,
    /// Classic baseline to score instead of a checkpoint.
    #[arg(long, value_enum)]
    pub baseline: Option<ClassicArg>,
    #[arg(long, value_enum, default_value = "rate")]
    pub task: TaskArg,
    /// Target horizon; defaults to the checkpoint's training horizon.
    #[arg(long)]
    pub delta: Option<usize>,
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["test", "unseen"])]
    pub splits: Vec<SplitArg>,
    /// ARIMA order as `p,d`.
    #[arg(long, default_value = "3,1")]
    pub arima: String,
    /// Model label in the CSV; defaults to the model kind.
    #[arg(long)]
    pub label: Option<String>,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Output directory for `metrics.csv` and `eval.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Metrics CSV files, typically one per seed.
    #[arg(required = true)]
    pub metrics: Vec<PathBuf>,
    /// Output directory for `summary.csv` and `summary.md`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Experiment spec JSON or a bundled spec name.
    pub spec: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seeds run in parallel.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Replaces the spec's seed list with this single seed.
    #[command(flatten)]
    pub seed: SeedArg,
    /// Print the resolved spec and exit.
    #[arg(long)]
    pub print: bool,
}

/// Provenance stored in every checkpoint this tool writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointTags {
    pub stage: String,
    pub model: ModelSpec,
    pub seed: u64,
    pub delta: usize,
    pub traces_sha256: String,
    pub path_len: usize,
    pub window: usize,
    #[serde(default)]
    pub task: Option<Task>,
    #[serde(default)]
    pub frozen: bool,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run_command(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            e.exit_code()
        }
    }
}

pub fn run_command(cmd: Command) -> Result<()> {
    let started = Instant::now();
    match cmd {
        Command::Scenario(a) => cmd_scenario(a, started),
        Command::Simulate(a) => cmd_simulate(a, started),
        Command::Dataset(a) => cmd_dataset(a, started),
        Command::Pretrain(a) => cmd_pretrain(a, started),
        Command::Finetune(a) => cmd_finetune(a, started),
        Command::Eval(a) => cmd_eval(a, started),
        Command::Report(a) => cmd_report(a, started),
        Command::Experiment(a) => cmd_experiment(a, started),
    }
}

fn parent(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn cmd_scenario(a: ScenarioArgs, started: Instant) -> Result<()> {
    let mut shape = Shape::default_for(&a.name).ok_or_else(|| {
        Error::Usage(format!("unknown scenario `{}`; bundled: {}", a.name, scenarios::BUNDLED.join(", ")))
    })?;
    shape.flows = a.flows.unwrap_or(shape.flows);
    shape.horizon_ms = a.horizon_ms.unwrap_or(shape.horizon_ms);
    shape.seed = a.seed.seed.unwrap_or(shape.seed);
    let s = scenarios::generate(&a.name, shape)?;
    write_json(&a.out, &s)?;
    let mut m = RunManifest::new("scenario", digest(&s), s.seed);
    m.outputs.push(a.out.clone());
    m.finish(&parent(&a.out), started)?;
    Ok(())
}

/// A scenario file, or a bundled scenario when no such file exists.
pub fn load_scenario(arg: &str) -> Result<(Scenario, PathBuf)> {
    let path = PathBuf::from(arg);
    if !path.exists() {
        if let Some(text) = scenarios::bundled_json(arg) {
            let s: Scenario = serde_json::from_str(text).map_err(|source| Error::Json {
                path: path.clone(),
                source,
            })?;
            return Ok((s, path));
        }
    }
    let s: Scenario = read_json(&path)?;
    Ok((s, path))
}

fn cmd_simulate(a: SimulateArgs, started: Instant) -> Result<()> {
    let (s, input) = load_scenario(&a.scenario)?;
    s.validate()?;
    let seed = a.seed.seed.unwrap_or(s.seed);
    let traces = run(&s, seed)?;
    mkdir(&a.out)?;
    let files = tracecsv::write_dir(&a.out, &traces)?;
    let mut m = RunManifest::new("simulate", digest(&s), seed);
    m.inputs.push(input);
    m.outputs = files;
    m.finish(&a.out, started)?;
    eprintln!("simulated {} flows over {} ms into {}", traces.len(), s.horizon_ms, a.out.display());
    Ok(())
}

fn cmd_dataset(a: DatasetArgs, started: Instant) -> Result<()> {
    let mut config: DatasetConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => DatasetConfig::default(),
    };
    if let Some(s) = a.seed.seed {
        config.seed = s;
    }
    let traces = tracecsv::read_path(&a.traces)?;
    let traces_ref = relative_to(&a.traces, &parent(&a.out));
    let manifest = dataset::build(&traces_ref, &traces, &config)?;
    write_json(&a.out, &manifest)?;
    let mut m = RunManifest::new("dataset", digest(&config), config.seed);
    m.inputs.push(a.traces.clone());
    m.inputs.extend(a.config.clone());
    m.outputs.push(a.out.clone());
    m.finish(&parent(&a.out), started)?;
    eprintln!(
        "{} flows at L={}: {} seen, {} unseen",
        traces.len(),
        manifest.path_len,
        manifest.split.seen_flow_ids.len(),
        manifest.split.unseen_flow_ids.len()
    );
    Ok(())
}

/// `target` expressed relative to `base` when both are relative paths.
fn relative_to(target: &Path, base: &Path) -> PathBuf {
    let abs = |p: &Path| std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf());
    let (t, b) = (abs(target), abs(base));
    let tc: Vec<_> = t.components().collect();
    let bc: Vec<_> = b.components().collect();
    let common = tc.iter().zip(&bc).take_while(|(x, y)| x == y).count();
    if common == 0 {
        return t;
    }
    let mut out = PathBuf::new();
    for _ in common..bc.len() {
        out.push("..");
    }
    for c in &tc[common..] {
        out.push(c);
    }
    out
}

fn train_config(a: &TrainArgs, seed: u64) -> Result<TrainConfig> {
    let mut cfg: TrainConfig = match &a.train {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    cfg.seed = seed;
    Ok(cfg)
}

fn load_dataset(path: &Path, delta: usize) -> Result<(DatasetManifest, Vec<flownn_core::trace::FlowTrace>, Examples)> {
    if delta == 0 {
        return Err(Error::Usage("--delta must be at least 1".into()));
    }
    let (m, traces) = dataset::load(path)?;
    let ex = m.examples(&traces, delta)?;
    Ok((m, traces, ex))
}

fn cmd_pretrain(a: PretrainArgs, started: Instant) -> Result<()> {
    let seed = a.train.seed.seed.unwrap_or(0);
    let spec: ModelSpec = match &a.model {
        Some(p) => read_json(p)?,
        None => ModelSpec::default(),
    };
    let cfg = train_config(&a.train, seed)?;
    let (m, _, ex) = load_dataset(&a.dataset, a.train.delta)?;
    let window = m.config.window.window;
    let mut net = pipeline::network(&spec, m.path_len, window, seed)?;
    let log = if spec.kind == ModelKind::Flownn {
        pipeline::pretrain_ssl(&mut net, &ex.train, &cfg)?
    } else {
        Vec::new()
    };
    if let Some(last) = log.last() {
        eprintln!("pretrained {} epochs, final SSL loss {:.4}", log.len(), last.train_loss);
    }
    let tags = CheckpointTags {
        stage: "pretrain".into(),
        model: spec,
        seed,
        delta: a.train.delta,
        traces_sha256: m.traces_sha256.clone(),
        path_len: m.path_len,
        window,
        task: None,
        frozen: false,
    };
    checkpoint::save(&a.out, &net, serde_json::to_value(&tags).expect("tags serialize"))?;
    write_json(&a.out.with_extension("log.json"), &log)?;
    let mut rm = RunManifest::new("pretrain", digest(&(&spec, &cfg)), seed);
    rm.inputs.push(a.dataset.clone());
    rm.inputs.extend(a.model.clone());
    rm.outputs.push(a.out.clone());
    rm.finish(&parent(&a.out), started)?;
    Ok(())
}

fn read_tags(path: &Path, value: &serde_json::Value) -> Result<CheckpointTags> {
    serde_json::from_value(value.clone()).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn check_same_data(ckpt: &Path, tags: &CheckpointTags, m: &DatasetManifest) -> Result<()> {
    if tags.path_len != m.path_len || tags.window != m.config.window.window {
        return Err(Error::Usage(format!(
            "{} was trained at L={}, window {} but the dataset has L={}, window {}",
            ckpt.display(),
            tags.path_len,
            tags.window,
            m.path_len,
            m.config.window.window
        )));
    }
    Ok(())
}

fn cmd_finetune(a: FinetuneArgs, started: Instant) -> Result<()> {
    let (mut net, ck) = checkpoint::load(&a.checkpoint)?;
    let mut tags = read_tags(&a.checkpoint, &ck.tags)?;
    let seed = a.train.seed.seed.unwrap_or(tags.seed);
    let cfg = train_config(&a.train, seed)?;
    let (m, _, ex) = load_dataset(&a.dataset, a.train.delta)?;
    check_same_data(&a.checkpoint, &tags, &m)?;
    let task: Task = a.task.into();
    let log = if a.freeze || task == Task::Delay {
        pipeline::fit_readout(&mut net, task, a.freeze, &ex.train, &ex.val, &cfg)?
    } else {
        finetune(&mut net, task, false, &ex.train, &ex.val, &cfg)?
    };
    eprintln!("finetuned {} epochs, best validation MSE {:.4} at epoch {}", log.epochs.len(), log.best_val, log.best_epoch);
    tags.stage = "finetune".into();
    tags.seed = seed;
    tags.delta = a.train.delta;
    tags.task = Some(task);
    tags.frozen = a.freeze;
    tags.traces_sha256 = m.traces_sha256.clone();
    checkpoint::save(&a.out, &net, serde_json::to_value(&tags).expect("tags serialize"))?;
    write_json(&a.out.with_extension("log.json"), &log)?;
    let mut rm = RunManifest::new("finetune", digest(&(&tags, &cfg)), seed);
    rm.inputs.push(a.dataset.clone());
    rm.inputs.push(a.checkpoint.clone());
    rm.outputs.push(a.out.clone());
    rm.finish(&parent(&a.out), started)?;
    Ok(())
}

fn parse_order(s: &str) -> Result<ArimaOrder> {
    let bad = || Error::Usage(format!("--arima expects `p,d`, got `{s}`"));
    let (p, d) = s.split_once(',').ok_or_else(bad)?;
    Ok(ArimaOrder {
        p: p.trim().parse().map_err(|_| bad())?,
        d: d.trim().parse().map_err(|_| bad())?,
    })
}

#[derive(Debug, Serialize)]
struct EvalOutput<'a> {
    model: &'a str,
    task: Task,
    delta: usize,
    seed: u64,
    splits: Vec<(&'static str, MetricReport)>,
}

fn cmd_eval(a: EvalArgs, started: Instant) -> Result<()> {
    let task: Task = a.task.into();
    let order = parse_order(&a.arima)?;
    let (label, delta, seed, scored): (String, usize, u64, Box<dyn Fn(&[Example], &DatasetManifest, &[flownn_core::trace::FlowTrace]) -> Result<MetricReport>>) =
        match (&a.checkpoint, a.baseline) {
            (Some(path), _) => {
                let (net, ck) = checkpoint::load(path)?;
                let tags = read_tags(path, &ck.tags)?;
                let label = a.label.clone().unwrap_or_else(|| tags.model.kind.as_str().to_string());
                let delta = a.delta.unwrap_or(tags.delta);
                let seed = a.seed.seed.unwrap_or(tags.seed);
                let path = path.clone();
                let scored = move |set: &[Example], m: &DatasetManifest, _: &[flownn_core::trace::FlowTrace]| {
                    check_same_data(&path, &tags, m)?;
                    pipeline::evaluate_model(&net, task, set)
                };
                (label, delta, seed, Box::new(scored))
            }
            (None, Some(b)) => {
                if task != Task::Rate {
                    return Err(Error::Usage("classic baselines predict rates only".into()));
                }
                let kind = match b {
                    ClassicArg::Naive => ModelKind::Naive,
                    ClassicArg::Arima => ModelKind::Arima,
                };
                let label = a.label.clone().unwrap_or_else(|| kind.as_str().to_string());
                let scored = move |set: &[Example], m: &DatasetManifest, traces: &[flownn_core::trace::FlowTrace]| {
                    let p = pipeline::classic_predictions(kind, order, traces, m, set)?;
                    pipeline::evaluate_predictions(task, set, &p)
                };
                (label, a.delta.unwrap_or(1), a.seed.seed.unwrap_or(0), Box::new(scored))
            }
            (None, None) => return Err(Error::Usage("give --checkpoint or --baseline".into())),
        };
    let (m, traces, ex) = load_dataset(&a.dataset, delta)?;
    let task_label = if delta == 1 { task.as_str().to_string() } else { format!("{}-d{delta}", task.as_str()) };
    let mut rows = Vec::new();
    let mut out = EvalOutput {
        model: &label,
        task,
        delta,
        seed,
        splits: Vec::new(),
    };
    for split in &a.splits {
        let set = split.pick(&ex);
        if set.is_empty() {
            continue;
        }
        let r = scored(set, &m, &traces)?;
        eprintln!("{label} {task_label} {}: mse {:.4} rse {:.4} corr {:.4}", split.as_str(), r.mse, r.rse, r.corr);
        rows.push(ResultRow {
            model: label.clone(),
            task: task_label.clone(),
            split: split.as_str().into(),
            seed,
            delta,
            iterations: None,
            mse: r.mse,
            rse: r.rse,
            corr: r.corr,
            count: r.count,
            degenerate: r.degenerate,
        });
        out.splits.push((split.as_str(), r));
    }
    mkdir(&a.out)?;
    let csv_path = a.out.join("metrics.csv");
    write_atomic(&csv_path, experiment::metrics_csv(&rows).as_bytes())?;
    write_json(&a.out.join("eval.json"), &out)?;
    let mut rm = RunManifest::new("eval", digest(&(&label, task, delta, &a.arima)), seed);
    rm.inputs.push(a.dataset.clone());
    rm.inputs.extend(a.checkpoint.clone());
    rm.outputs.push(csv_path);
    rm.finish(&a.out, started)?;
    Ok(())
}

fn cmd_report(a: ReportArgs, started: Instant) -> Result<()> {
    let paths: Vec<&Path> = a.metrics.iter().map(PathBuf::as_path).collect();
    let summary = report::merge(&paths)?;
    mkdir(&a.out)?;
    write_atomic(&a.out.join("summary.csv"), report::summary_csv(&summary).as_bytes())?;
    let md = report::markdown(&summary);
    write_atomic(&a.out.join("summary.md"), md.as_bytes())?;
    print!("{md}");
    let mut rm = RunManifest::new("report", digest(&a.metrics), 0);
    rm.inputs = a.metrics.clone();
    rm.outputs = vec![a.out.join("summary.csv"), a.out.join("summary.md")];
    rm.finish(&a.out, started)?;
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs, started: Instant) -> Result<()> {
    let path = PathBuf::from(&a.spec);
    let (mut spec, base) = match experiment::bundled(&a.spec) {
        Some(s) if !path.exists() => (s, PathBuf::from(".")),
        _ => (read_json::<ExperimentSpec>(&path)?, parent(&path)),
    };
    if let Some(s) = a.seed.seed {
        spec.seeds = vec![s];
    }
    if a.print {
        println!("{}", to_json(&spec));
        return Ok(());
    }
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(&spec.name));
    mkdir(&out)?;
    let (report, bundle) = experiment::run_experiment(&spec, &base, &out, a.jobs)?;
    print!("{}", report::markdown(&report.summary));
    for c in &report.frozen_checks {
        if !c.backbone_unchanged {
            eprintln!("warning: {} seed {} changed its backbone under the {} protocol", c.model, c.seed, c.protocol);
        }
    }
    let mut rm = RunManifest::new("experiment", report.spec_digest.clone(), spec.seeds[0]);
    if path.exists() {
        rm.inputs.push(path);
    }
    rm.outputs = vec![bundle.report, bundle.metrics, bundle.plot, bundle.logs];
    rm.outputs.extend(bundle.checkpoints);
    rm.finish(&out, started)?;
    Ok(())
}
