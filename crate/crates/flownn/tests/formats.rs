use std::fs;

use flownn::checkpoint;
use flownn::dataset::{self, DatasetConfig};
use flownn::error::Error;
use flownn::scenarios::{self, Shape};
use flownn::tracecsv;
use flownn_core::netsim::{run, Scenario};
use flownn_core::trace::FlowTrace;
use flownn_core::train::{finetune, Network, Task, TrainConfig, WindowSpec};

fn small_traces() -> Vec<FlowTrace> {
    let s = scenarios::generate(
        "line5",
        Shape {
            flows: 4,
            horizon_ms: 600,
            seed: 3,
        },
    )
    .unwrap();
    run(&s, s.seed).unwrap()
}

#[test]
fn bundled_scenario_files_match_generators() {
    for name in scenarios::BUNDLED {
        let file: Scenario = serde_json::from_str(scenarios::bundled_json(name).unwrap()).unwrap();
        let generated = scenarios::generate(name, Shape::default_for(name).unwrap()).unwrap();
        assert_eq!(file, generated, "{name}.json is stale");
    }
}

#[test]
fn trace_csv_round_trip() {
    let traces = small_traces();
    let dir = tempfile::tempdir().unwrap();
    let files = tracecsv::write_dir(dir.path(), &traces).unwrap();
    assert_eq!(files.len(), traces.len());
    let back = tracecsv::read_path(dir.path()).unwrap();
    assert_eq!(back, traces);
    let one = tracecsv::read_path(&files[1]).unwrap();
    assert_eq!(one, vec![traces[1].clone()]);
}

fn parse_err(text: &str) -> String {
    match tracecsv::parse(std::path::Path::new("t.csv"), text) {
        Err(e) => e.to_string(),
        Ok(_) => panic!("parsed: {text}"),
    }
}

#[test]
fn trace_csv_errors_name_the_problem() {
    let h = tracecsv::HEADER;
    let e = parse_err("time,flow\n");
    assert!(e.contains("header"), "{e}");
    let e = parse_err(&format!("{h}\n0,1,0,a,1,1,0,\n0,1,1,b,1,1,0,x\n"));
    assert!(e.contains("t.csv:3"), "{e}");
    let e = parse_err(&format!("{h}\n0,1,0,a,1,1,0,\n0,1,1,b,1,1,0,2\n2,1,0,a,1,1,0,\n2,1,1,b,1,1,0,2\n"));
    assert!(e.contains("gap at t=1"), "{e}");
    let e = parse_err(&format!("{h}\n0,1,0,a,1,1,0,\n0,1,1,b,1,1,0,\n"));
    assert!(e.contains("delay"), "{e}");
    let e = parse_err(&format!("{h}\n0,1,0,a,1,1,0,\n0,1,0,a,1,1,0,\n0,1,1,b,1,1,0,2\n"));
    assert!(e.contains("duplicate"), "{e}");
}

#[test]
fn missing_trace_path_is_reported() {
    let err = tracecsv::read_path(std::path::Path::new("/nonexistent/traces")).unwrap_err();
    assert!(matches!(err, Error::Missing(_)), "{err:?}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn dataset_manifest_round_trip_and_digest_check() {
    let traces = small_traces();
    let dir = tempfile::tempdir().unwrap();
    let tdir = dir.path().join("traces");
    tracecsv::write_dir(&tdir, &traces).unwrap();
    let cfg = DatasetConfig {
        n_unseen: 1,
        window: WindowSpec {
            window: 8,
            delta: 1,
            stride: 4,
        },
        ..DatasetConfig::default()
    };
    let m = dataset::build(std::path::Path::new("traces"), &traces, &cfg).unwrap();
    let mp = dir.path().join("ds.json");
    flownn::io::write_json(&mp, &m).unwrap();
    let (back, tr) = dataset::load(&mp).unwrap();
    assert_eq!(back, m);
    assert_eq!(tr, traces);
    let ex = back.examples(&tr, 1).unwrap();
    assert!(!ex.train.is_empty() && !ex.test.is_empty() && !ex.unseen.is_empty());

    // edit one rate: the digest no longer matches
    let f = tdir.join(tracecsv::file_name(traces[0].flow_id));
    let text = fs::read_to_string(&f).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut cols: Vec<String> = lines[5].split(',').map(str::to_string).collect();
    cols[4] = "1".into();
    lines[5] = cols.join(",");
    fs::write(&f, lines.join("\n") + "\n").unwrap();
    let err = dataset::load(&mp).unwrap_err();
    assert!(err.to_string().contains("traces changed"), "{err}");
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let traces = small_traces();
    let cfg = DatasetConfig {
        n_unseen: 0,
        window: WindowSpec {
            window: 8,
            delta: 1,
            stride: 8,
        },
        ..DatasetConfig::default()
    };
    let m = dataset::build(std::path::Path::new("t"), &traces, &cfg).unwrap();
    let ex = m.examples(&traces, 1).unwrap();
    let mut net = Network::flownn(flownn_core::flownn::ModelConfig::new(m.path_len, 6, 1, 8), 5).unwrap();
    let tc = TrainConfig {
        epochs: 1,
        batch_size: 8,
        max_batches: Some(2),
        ..TrainConfig::default()
    };
    finetune(&mut net, Task::Rate, false, &ex.train, &ex.val, &tc).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ck.json");
    checkpoint::save(&p, &net, serde_json::json!({"stage": "test"})).unwrap();
    let (back, manifest) = checkpoint::load(&p).unwrap();
    // gradient buffers are scratch space and are not saved
    net.store.zero_grads();
    assert_eq!(back, net);
    assert_eq!(manifest.tags["stage"], "test");
    assert!(checkpoint::sidecar_path(&p).exists());

    // corrupt the sidecar
    let side = checkpoint::sidecar_path(&p);
    let mut bytes = fs::read(&side).unwrap();
    bytes[3] ^= 1;
    fs::write(&side, bytes).unwrap();
    assert!(checkpoint::load(&p).is_err());
}
