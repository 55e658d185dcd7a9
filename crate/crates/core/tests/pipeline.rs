use flownn_core::flownn::ModelConfig;
use flownn_core::netsim::{run, FlowSpec, Link, OnOff, Scenario, SimParams, Topology};
use flownn_core::trace::{build_dataset, multi_step_targets, validate_trace, FlowTrace};
use flownn_core::train::{
    build_examples, evaluate, finetune, mse_on, naive_rate, pretrain, predict, Network, Task, TrainConfig, WindowSpec,
};
use flownn_core::windowing::{split, Role};
use proptest::prelude::*;

fn chain(n: usize, capacity_bps: f64, delay_ms: f64) -> Topology {
    let nodes: Vec<String> = (0..n).map(|i| format!("r{i}")).collect();
    let links = (0..n - 1)
        .map(|i| Link {
            from: nodes[i].clone(),
            to: nodes[i + 1].clone(),
            capacity_bps,
            delay_ms,
            buffer_bits: 2e6,
        })
        .collect();
    Topology { nodes, links }
}

/// Flows share a chain; flow `i` enters at router `i % 2` and crosses `len` routers.
fn shared_chain(flows: u32, len: usize, horizon_ms: u64) -> Scenario {
    let topology = chain(len + 1, 50e6, 1.0);
    let flows = (0..flows)
        .map(|i| {
            let first = (i % 2) as usize;
            FlowSpec {
                flow_id: i,
                path: topology.nodes[first..first + len].to_vec(),
                start_ms: 0,
                end_ms: horizon_ms - 50,
                initial_window_bits: 60_000.0,
                size_bits: None,
                on_off: Some(OnOff {
                    mean_on_ms: 60.0,
                    mean_off_ms: 30.0,
                }),
            }
        })
        .collect();
    Scenario {
        name: "shared".into(),
        topology,
        flows,
        params: SimParams::default(),
        seed: 3,
        horizon_ms,
    }
}

fn traces() -> Vec<FlowTrace> {
    run(&shared_chain(6, 4, 1200), 3).unwrap()
}

#[test]
fn simulated_traces_conserve_and_are_reproducible() {
    let a = traces();
    let b = traces();
    assert_eq!(a, b);
    assert_eq!(a.len(), 6);
    for t in &a {
        assert_eq!(t.path_len(), 4);
        validate_trace(t, 1e-6).unwrap();
        for node in &t.nodes {
            assert!(node.recv_rate.iter().chain(&node.send_rate).all(|&x| x >= 0.0 && x.is_finite()));
        }
    }
}

#[test]
fn trained_model_beats_naive_on_held_out_time() {
    let traces = traces();
    let split = build_dataset(&traces, [6, 2, 2], 0, 1).unwrap();
    let spec = WindowSpec {
        window: 12,
        delta: 1,
        stride: 3,
    };
    let ids = &split.seen_flow_ids;
    let cut = |r: &std::ops::Range<u64>| build_examples(&traces, &split.stats, ids, r.clone(), &spec, 4).unwrap();
    let (train, val, test) = (cut(&split.train), cut(&split.val), cut(&split.test));
    assert!(!train.is_empty() && !val.is_empty() && !test.is_empty());

    let mut net = Network::flownn(ModelConfig::new(4, 16, 1, spec.window), 5).unwrap();
    let cfg = TrainConfig {
        epochs: 6,
        batch_size: 16,
        seed: 5,
        ..TrainConfig::default()
    };
    pretrain(&mut net, &train, &TrainConfig { epochs: 1, ..cfg }).unwrap();
    let before = mse_on(&net, Task::Rate, &val, 64).unwrap();
    finetune(&mut net, Task::Rate, false, &train, &val, &cfg).unwrap();
    let after = mse_on(&net, Task::Rate, &val, 64).unwrap();
    assert!(after < before, "validation {before} -> {after}");

    let y: Vec<f64> = test.iter().flat_map(|e| e.rate.iter().copied()).collect();
    let model = evaluate(&y, &predict(&net, Task::Rate, &test, 64).unwrap()).unwrap();
    let naive = evaluate(&y, &naive_rate(&test)).unwrap();
    assert!(model.mse.is_finite() && naive.mse.is_finite());
    assert!(model.mse < naive.mse, "model {} naive {}", model.mse, naive.mse);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_labels_every_index_by_sign(diff in prop::collection::vec(-5.0f64..5.0, 0..60)) {
        let pairing = split(&diff);
        prop_assert_eq!(pairing.len(), diff.len());
        let roles = pairing.roles();
        prop_assert_eq!(roles.len(), diff.len());
        for (d, (role, _)) in diff.iter().zip(&roles) {
            prop_assert_eq!(*role == Role::Target, *d < 0.0);
        }
        let mut end = 0;
        for p in &pairing.pairs {
            prop_assert_eq!(p.span().start, end);
            prop_assert_eq!(p.source.end, p.target.start);
            end = p.span().end;
        }
    }

    #[test]
    fn multi_step_targets_are_window_means(
        series in prop::collection::vec(-100.0f64..100.0, 1..40),
        delta in 1usize..6,
    ) {
        match multi_step_targets(&series, delta) {
            Ok(out) => {
                prop_assert_eq!(out.len(), series.len() - delta);
                for (t, v) in out.iter().enumerate() {
                    let mean = series[t + 1..=t + delta].iter().sum::<f64>() / delta as f64;
                    prop_assert!((v - mean).abs() <= 1e-9 * (1.0 + mean.abs()));
                }
            }
            Err(_) => prop_assert!(series.len() <= delta),
        }
    }

    #[test]
    fn uncontended_hops_shift_by_link_delay(delay in 1u32..4, len in 2usize..6, seed in 0u64..1000) {
        let mut s = shared_chain(1, len, 300);
        s.topology = chain(len, 1e12, delay as f64);
        s.topology.links.iter_mut().for_each(|l| l.buffer_bits = 1e15);
        s.flows[0].path = s.topology.nodes.clone();
        s.flows[0].on_off = Some(OnOff { mean_on_ms: 9.0, mean_off_ms: 6.0 });
        let t = &run(&s, seed).unwrap()[0];
        let lag = delay as usize;
        for k in 1..len {
            let send = &t.nodes[k - 1].send_rate;
            let recv = &t.nodes[k].recv_rate;
            prop_assert!(recv[..lag].iter().all(|&x| x == 0.0));
            for i in lag..recv.len() {
                prop_assert_eq!(recv[i], send[i - lag]);
            }
        }
    }
}
