use super::{Graph, ParamStore, Var};

/// Central finite differences over every parameter entry of `store`.
///
/// Returns the worst relative error `|numeric - analytic| / max(|numeric|,
/// |analytic|, 1e-6)` between the difference quotient with step `h` and the
/// gradient from [`Graph::backward_into`]. `loss` must build a scalar.
pub fn max_param_grad_error(store: &ParamStore, h: f64, loss: impl Fn(&ParamStore, &mut Graph) -> Var) -> f64 {
    let mut analytic = store.clone();
    analytic.zero_grads();
    let mut g = Graph::new();
    let l = loss(&analytic, &mut g);
    g.backward_into(l, &mut analytic).expect("scalar loss");

    let eval = |s: &ParamStore| {
        let mut g = Graph::new();
        let l = loss(s, &mut g);
        g.value(l).item()
    };
    let mut worst: f64 = 0.0;
    let mut probe = store.clone();
    for (id, p) in store.iter() {
        for k in 0..p.value.len() {
            let orig = p.value.data()[k];
            probe.get_mut(id).value.data_mut()[k] = orig + h;
            let up = eval(&probe);
            probe.get_mut(id).value.data_mut()[k] = orig - h;
            let down = eval(&probe);
            probe.get_mut(id).value.data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let exact = analytic.grad(id).data()[k];
            let err = (numeric - exact).abs() / numeric.abs().max(exact.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    worst
}
