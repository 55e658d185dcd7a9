use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::ndiff::check::max_param_grad_error;
use crate::ndiff::Tensor;
use crate::windowing::{WindowPair, WindowPairing};

fn sample(rng: &mut ChaCha8Rng, steps: usize, nodes: usize) -> WindowSample {
    WindowSample {
        steps,
        nodes,
        features: 3,
        values: (0..steps * nodes * 3).map(|_| rng.gen_range(-1.5..1.5)).collect(),
        raw_rate: (0..steps * nodes).map(|_| rng.gen_range(0.0..10.0)).collect(),
    }
}

fn batch(seed: u64, b: usize, steps: usize, nodes: usize) -> WindowBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<_> = (0..b).map(|_| sample(&mut rng, steps, nodes)).collect();
    let refs: Vec<_> = samples.iter().collect();
    WindowBatch::from_samples(&refs).unwrap()
}

fn model(l: usize, d: usize, n: usize, t: usize, seed: u64) -> (ParamStore, FlowNN) {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = FlowNN::new(&mut store, ModelConfig::new(l, d, n, t), &mut rng).unwrap();
    (store, m)
}

fn random_states(g: &mut Graph, rng: &mut ChaCha8Rng, steps: usize, rows: usize, d: usize) -> Vec<Var> {
    (0..steps)
        .map(|_| g.input(Tensor::from_vec(rows, d, (0..rows * d).map(|_| rng.gen_range(-1.0..1.0)).collect())))
        .collect()
}

fn pairing(pairs: &[(core::ops::Range<usize>, core::ops::Range<usize>)]) -> WindowPairing {
    WindowPairing {
        pairs: pairs
            .iter()
            .map(|(s, t)| WindowPair {
                source: s.clone(),
                target: t.clone(),
            })
            .collect(),
    }
}

#[test]
fn forward_shapes_are_finite() {
    let (store, m) = model(5, 8, 2, 10, 1);
    let b = batch(2, 3, 10, 5);
    let mut g = Graph::new();
    let out = m.forward(&mut g, &store, &b).unwrap();
    assert_eq!(out.nodes.len(), 5);
    for &v in &out.nodes {
        assert_eq!(g.shape(v), [3, 8]);
        assert!(g.value(v).is_finite());
    }
}

#[test]
fn embedding_is_shared_over_positions() {
    let (store, m) = model(3, 6, 1, 4, 1);
    let mut b = batch(3, 1, 4, 3);
    let row: Vec<f64> = b.inputs.row(0).to_vec();
    b.inputs.row_mut(7).copy_from_slice(&row);
    let mut g = Graph::new();
    let h = m.embed_states(&mut g, &store, &b).unwrap();
    assert_eq!(h.len(), 3);
    assert_eq!(h[0].len(), 4);
    // row 7 is step 2, node 1
    assert_eq!(g.value(h[0][0]), g.value(h[1][2]));
    assert_ne!(g.value(h[0][0]), g.value(h[2][2]));
}

#[test]
fn embedding_gradient_check() {
    let (store, m) = model(3, 4, 1, 3, 5);
    let b = batch(6, 2, 3, 3);
    let err = max_param_grad_error(&store, 1e-5, |s, g| {
        let h = m.embed_states(g, s, &b).unwrap();
        let all: Vec<Var> = h.into_iter().flatten().collect();
        let x = g.concat_rows(&all).unwrap();
        let sq = g.mul(x, x).unwrap();
        g.sum(sq)
    });
    assert!(err <= 1e-4, "{err}");
}

#[test]
fn path_aggregate_width_and_zero_fixed_point() {
    let (store, m) = model(5, 64, 1, 4, 1);
    let mut g = Graph::new();
    let states: Vec<Vec<Var>> = (0..5).map(|_| (0..4).map(|_| g.zeros(2, 64)).collect()).collect();
    let out = m.path_aggregate(&mut g, &store, &states).unwrap();
    assert_eq!(out.len(), 4);
    for v in out {
        assert_eq!(g.shape(v), [2, 64]);
        assert!(g.value(v).data().iter().all(|&x| x == 0.0));
    }
    assert!(m.path_aggregate(&mut g, &store, &states[..4]).is_err());
}

#[test]
fn path_aggregate_depends_on_node_order() {
    let (store, m) = model(4, 6, 1, 5, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut g = Graph::new();
    let states: Vec<Vec<Var>> = (0..4).map(|_| random_states(&mut g, &mut rng, 5, 1, 6)).collect();
    let mut permuted = states.clone();
    permuted.swap(0, 2);
    let a = m.path_aggregate(&mut g, &store, &states).unwrap();
    let b = m.path_aggregate(&mut g, &store, &permuted).unwrap();
    assert_ne!(g.value(a[4]), g.value(b[4]));
}

fn masks_for(p: &[WindowPairing], steps: usize) -> Vec<StepMasks> {
    let b = WindowBatch::new(p.len(), steps, 2, Tensor::zeros(steps * 2 * p.len(), 3), vec![p.to_vec()]).unwrap();
    b.masks[0].clone()
}

#[test]
fn source_only_pairing_uses_pair_mlp() {
    let (store, m) = model(2, 5, 1, 4, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = Graph::new();
    let pred = random_states(&mut g, &mut rng, 4, 1, 5);
    let own = random_states(&mut g, &mut rng, 4, 1, 5);
    let masks = masks_for(&[pairing(&[(0..4, 4..4)])], 4);
    let out = m.induction(&mut g, &store, &masks, &pred, &own).unwrap();
    for t in 0..4 {
        let x = g.concat_cols(&[pred[t], own[t]]).unwrap();
        let y = m.pair_mlp.forward(&mut g, &store, x).unwrap();
        assert_eq!(g.value(out[t]), g.value(y));
    }
}

#[test]
fn single_pair_decodes_two_steps_from_two_source_steps() {
    let (store, m) = model(2, 5, 1, 4, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut g = Graph::new();
    let pred = random_states(&mut g, &mut rng, 4, 1, 5);
    let own = random_states(&mut g, &mut rng, 4, 1, 5);
    let masks = masks_for(&[pairing(&[(0..2, 2..4)])], 4);
    let out = m.induction(&mut g, &store, &masks, &pred, &own).unwrap();
    let dec = m.seq2seq.forward(&mut g, &store, &pred[0..2], &own[2..4]).unwrap();
    assert_eq!(dec.len(), 2);
    assert_eq!(g.value(out[2]), g.value(dec[0]));
    assert_eq!(g.value(out[3]), g.value(dec[1]));
}

/// Per-sample induction written directly from the pair list.
fn reference_induction(
    m: &FlowNN,
    g: &mut Graph,
    store: &ParamStore,
    p: &WindowPairing,
    pred: &[Var],
    own: &[Var],
) -> Vec<Var> {
    let mut out = Vec::new();
    for pair in &p.pairs {
        for t in pair.source.clone() {
            let x = g.concat_cols(&[pred[t], own[t]]).unwrap();
            out.push(m.pair_mlp.forward(g, store, x).unwrap());
        }
        if !pair.target.is_empty() {
            let src: Vec<Var> = pair.source.clone().map(|t| pred[t]).collect();
            let inputs: Vec<Var> = pair
                .target
                .clone()
                .map(|t| own[t])
                .collect();
            out.extend(m.seq2seq.forward(g, store, &src, &inputs).unwrap());
        }
    }
    out
}

#[test]
fn batched_induction_matches_per_sample_reference() {
    let (store, m) = model(2, 6, 1, 12, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let steps = 12;
    let rows = 6;
    let pairings: Vec<WindowPairing> = (0..rows)
        .map(|_| {
            let diff: Vec<f64> = (0..steps).map(|_| rng.gen_range(-1.0..1.0)).collect();
            crate::windowing::split(&diff)
        })
        .collect();
    let masks = masks_for(&pairings, steps);
    let mut g = Graph::new();
    let pred = random_states(&mut g, &mut rng, steps, rows, 6);
    let own = random_states(&mut g, &mut rng, steps, rows, 6);
    let out = m.induction(&mut g, &store, &masks, &pred, &own).unwrap();
    for (b, p) in pairings.iter().enumerate() {
        let pick = |g: &mut Graph, v: &[Var]| -> Vec<Var> { v.iter().map(|&x| g.slice_rows(x, b, 1).unwrap()).collect() };
        let pb = pick(&mut g, &pred);
        let ob = pick(&mut g, &own);
        let expect = reference_induction(&m, &mut g, &store, p, &pb, &ob);
        for t in 0..steps {
            let got = g.value(out[t]).row(b).to_vec();
            assert_eq!(got.as_slice(), g.value(expect[t]).data(), "sample {b} step {t}");
        }
    }
}

#[test]
fn induction_gradient_reaches_both_inputs() {
    let (store, m) = model(2, 4, 1, 6, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut g = Graph::new();
    let pred = random_states(&mut g, &mut rng, 6, 1, 4);
    let own = random_states(&mut g, &mut rng, 6, 1, 4);
    let masks = masks_for(&[pairing(&[(0..2, 2..4), (4..5, 5..6)])], 6);
    let out = m.induction(&mut g, &store, &masks, &pred, &own).unwrap();
    let all = g.concat_rows(&out).unwrap();
    let loss = g.sum(all);
    let grads = g.backward(loss).unwrap();
    let nonzero = |v: &Var| grads.wrt(*v).map_or(false, |t| t.data().iter().any(|&x| x != 0.0));
    // predecessor states enter through source steps only
    for t in [0, 1, 4] {
        assert!(nonzero(&pred[t]), "pred {t}");
    }
    for t in [2, 3, 5] {
        assert!(!nonzero(&pred[t]), "pred {t}");
    }
    // own states feed the pair MLP at source steps and the decoder at target steps
    for t in 0..6 {
        assert!(nonzero(&own[t]), "own {t}");
    }
}

#[test]
fn uncovered_pairing_is_rejected() {
    let p = pairing(&[(0..2, 2..3)]);
    let r = WindowBatch::new(1, 4, 2, Tensor::zeros(8, 3), vec![vec![p]]);
    assert!(r.is_err());
    assert!(FlowNN::new(&mut ParamStore::new(), ModelConfig::new(1, 4, 1, 4), &mut ChaCha8Rng::seed_from_u64(0)).is_err());
}

#[test]
fn more_iterations_change_output_not_parameters() {
    let (s1, m1) = model(4, 6, 1, 8, 7);
    let (s2, m2) = model(4, 6, 2, 8, 7);
    assert_eq!(s1.scalar_count(), s2.scalar_count());
    assert_eq!(s1.snapshot(), s2.snapshot());
    let b = batch(1, 2, 8, 4);
    let mut g = Graph::new();
    let o1 = m1.forward(&mut g, &s1, &b).unwrap();
    let o2 = m2.forward(&mut g, &s2, &b).unwrap();
    assert_ne!(g.value(o1.nodes[3]), g.value(o2.nodes[3]));
}

#[test]
fn forward_is_deterministic() {
    let b = batch(4, 2, 8, 4);
    let run = || {
        let (s, m) = model(4, 6, 2, 8, 9);
        let mut g = Graph::new();
        let o = m.forward(&mut g, &s, &b).unwrap();
        o.nodes.iter().map(|&v| g.value(v).clone()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn path_state_conditioning_differs_from_predecessor() {
    let (store, mut m) = model(4, 6, 1, 8, 9);
    let b = batch(5, 1, 8, 4);
    let mut g = Graph::new();
    let a = m.forward(&mut g, &store, &b).unwrap();
    m.config.conditioning = Conditioning::PathState;
    let c = m.forward(&mut g, &store, &b).unwrap();
    assert_eq!(g.value(a.nodes[1]), g.value(c.nodes[1]));
    assert_ne!(g.value(a.nodes[3]), g.value(c.nodes[3]));
}

#[test]
fn end_to_end_gradient_check() {
    let (store, m) = model(3, 4, 2, 6, 21);
    let b = batch(22, 2, 6, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let w = Tensor::from_vec(2, 12, (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let err = max_param_grad_error(&store, 1e-5, |s, g| {
        let out = m.forward(g, s, &b).unwrap();
        let all = g.concat_cols(&out.nodes).unwrap();
        let wv = g.constant(w.clone());
        let p = g.mul(all, wv).unwrap();
        g.sum(p)
    });
    assert!(err <= 1e-4, "{err}");
}

#[test]
#[ignore]
fn latency_probe() {
    let (store, m) = model(5, 64, 2, 32, 1);
    let b = batch(1, 1, 32, 5);
    let mut times = Vec::new();
    for _ in 0..100 {
        let t0 = std::time::Instant::now();
        let mut g = Graph::new();
        let o = m.forward(&mut g, &store, &b).unwrap();
        core::hint::black_box(g.value(o.nodes[4]));
        times.push(t0.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    let mut g = Graph::new();
    m.forward(&mut g, &store, &b).unwrap();
    std::println!("median {:.3} ms, {} nodes", times[50] * 1e3, g.len());
}
