use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::tensor::{matmul_acc, matmul_nt_acc, matmul_tn_acc};
use super::{ParamId, ParamStore, Partition, Tensor};
use crate::error::{shape_err, Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

/// Norm below which a vector counts as zero for cosine similarity.
pub const COSINE_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    SelectRows(Vec<bool>, Var, Var),
    Sum(Var),
    Mean(Var),
    RowCosine(Var, Var),
    MeanSquaredError(Var, Tensor),
    StopGradient,
    Reshape(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; `None` when no gradient
    /// reaches it (constants, stop-gradient ancestors, unused values).
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

/// Tape of tensor operations for reverse-mode differentiation.
///
/// Values are computed eagerly when an op is recorded. A graph is built per
/// forward pass and dropped afterwards; parameters are pulled in from a
/// [`ParamStore`] and their gradients are written back by
/// [`Graph::backward_into`].
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_vars: BTreeMap<ParamId, Var>,
    frozen: Vec<Partition>,
    degenerate_cosines: usize,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parameters from these partitions enter the graph as constants, so no
    /// gradient is ever computed for them.
    pub fn with_frozen(partitions: &[Partition]) -> Self {
        Self {
            frozen: partitions.to_vec(),
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Number of cosine rows evaluated with both norms below [`COSINE_EPS`].
    pub fn degenerate_cosines(&self) -> usize {
        self.degenerate_cosines
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A constant input (no gradient is propagated to it).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// An input leaf whose gradient is tracked.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.constant(Tensor::zeros(rows, cols))
    }

    /// Loads a parameter; repeated loads of the same id return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let p = store.get(id);
        let trainable = !self.frozen.contains(&p.partition);
        let v = self.push(p.value.clone(), Op::Param, trainable);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa[1] != sb[0] {
            return Err(shape_err("matmul", format!("{sa:?} x {sb:?}")));
        }
        let mut out = Tensor::zeros(sa[0], sb[1]);
        matmul_acc(out.data_mut(), self.value(a), self.value(b));
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    /// Adds a `1 x c` bias to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        if sb != [1, sa[1]] {
            return Err(shape_err("add_bias", format!("{sa:?} + {sb:?}")));
        }
        let mut out = self.value(a).clone();
        let b = self.value(bias).data().to_vec();
        for r in 0..sa[0] {
            for (o, bv) in out.row_mut(r).iter_mut().zip(&b) {
                *o += *bv;
            }
        }
        let ng = self.ng(a) || self.ng(bias);
        Ok(self.push(out, Op::AddBias(a, bias), ng))
    }

    fn binary(&mut self, ctx: &str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(ctx, format!("{sa:?} vs {sb:?}")));
        }
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let data = va.iter().zip(vb).map(|(x, y)| f(*x, *y)).collect();
        Ok(Tensor::from_vec(sa[0], sa[1], data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("add", a, b, |x, y| x + y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("sub", a, b, |x, y| x - y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Sub(a, b), ng))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("mul", a, b, |x, y| x * y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, s), ng)
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| 1.0 - x);
        let ng = self.ng(a);
        self.push(out, Op::OneMinus(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let ng = self.ng(a);
        self.push(out, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(libm::tanh);
        let ng = self.ng(a);
        self.push(out, Op::Tanh(a), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        let ng = self.ng(a);
        self.push(out, Op::Relu(a), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(shape_err("concat_cols", "no inputs"));
        };
        let rows = self.shape(first)[0];
        let mut cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s[0] != rows {
                return Err(shape_err("concat_cols", format!("row counts {rows} and {}", s[0])));
            }
            cols += s[1];
        }
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.nodes[p.0].value.row(r);
                out.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(shape_err("concat_rows", "no inputs"));
        };
        let cols = self.shape(first)[1];
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let s = self.shape(p);
            if s[1] != cols {
                return Err(shape_err("concat_rows", format!("column counts {cols} and {}", s[1])));
            }
            rows += s[0];
            data.extend_from_slice(self.value(p).data());
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(Tensor::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()), ng))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let s = self.shape(a);
        if start + width > s[1] {
            return Err(shape_err("slice_cols", format!("[{start}, {}) of {s:?}", start + width)));
        }
        let mut out = Tensor::zeros(s[0], width);
        for r in 0..s[0] {
            out.row_mut(r).copy_from_slice(&self.value(a).row(r)[start..start + width]);
        }
        let ng = self.ng(a);
        Ok(self.push(out, Op::SliceCols(a, start), ng))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, count: usize) -> Result<Var> {
        let s = self.shape(a);
        if start + count > s[0] {
            return Err(shape_err("slice_rows", format!("[{start}, {}) of {s:?}", start + count)));
        }
        let data = self.value(a).data()[start * s[1]..(start + count) * s[1]].to_vec();
        let ng = self.ng(a);
        Ok(self.push(Tensor::from_vec(count, s[1], data), Op::SliceRows(a, start), ng))
    }

    /// Row `i` of the result is row `i` of `a` where `mask[i]`, else of `b`.
    pub fn select_rows(&mut self, mask: &[bool], a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb || mask.len() != sa[0] {
            return Err(shape_err(
                "select_rows",
                format!("{sa:?} vs {sb:?} with {} mask rows", mask.len()),
            ));
        }
        let mut out = self.value(b).clone();
        for (r, &m) in mask.iter().enumerate() {
            if m {
                out.row_mut(r).copy_from_slice(self.nodes[a.0].value.row(r));
            }
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::SelectRows(mask.to_vec(), a, b), ng))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s: f64 = t.data().iter().sum::<f64>() / t.len() as f64;
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::Mean(a), ng)
    }

    /// Cosine similarity of matching rows, as an `r x 1` column.
    ///
    /// A row pair where both norms fall below [`COSINE_EPS`] yields 0 and is
    /// counted in [`Graph::degenerate_cosines`]; if only one norm is tiny the
    /// norm is clamped to [`COSINE_EPS`].
    pub fn row_cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err("row_cosine", format!("{sa:?} vs {sb:?}")));
        }
        let mut out = Tensor::zeros(sa[0], 1);
        for r in 0..sa[0] {
            let (x, y) = (self.value(a).row(r), self.value(b).row(r));
            match cosine_parts(x, y) {
                Some((dot, na, nb)) => out.set(r, 0, dot / (na * nb)),
                None => self.degenerate_cosines += 1,
            }
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::RowCosine(a, b), ng))
    }

    /// Mean of squared differences against a constant target.
    pub fn mse(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let sp = self.shape(pred);
        if sp != target.shape() {
            return Err(shape_err("mse", format!("{sp:?} vs {:?}", target.shape())));
        }
        let p = self.value(pred).data();
        let n = p.len() as f64;
        let s: f64 = p.iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        let ng = self.ng(pred);
        Ok(self.push(Tensor::scalar(s / n), Op::MeanSquaredError(pred, target.clone()), ng))
    }

    /// Same values in a new `rows x cols` shape (row-major order kept).
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let s = self.shape(a);
        if s[0] * s[1] != rows * cols {
            return Err(shape_err("reshape", format!("{s:?} into [{rows}, {cols}]")));
        }
        let out = Tensor::from_vec(rows, cols, self.value(a).data().to_vec());
        let ng = self.ng(a);
        Ok(self.push(out, Op::Reshape(a), ng))
    }

    /// Identical values; gradient flow into `a` is cut.
    pub fn stop_gradient(&mut self, a: Var) -> Var {
        let out = self.value(a).clone();
        self.push(out, Op::StopGradient, false)
    }

    /// Reverse pass from a `1 x 1` loss. Gradients reaching the same value
    /// through several paths are summed in recording order.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let s = self.shape(loss);
        if s != [1, 1] {
            return Err(Error::NonScalarLoss { rows: s[0], cols: s[1] });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].needs_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(gout) = grads[i].take() else { continue };
            self.propagate(node, &gout, &mut grads);
            grads[i] = Some(gout);
        }
        Ok(Gradients { grads })
    }

    /// Runs [`Graph::backward`] and adds parameter gradients into `store`.
    pub fn backward_into(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        let grads = self.backward(loss)?;
        for (&id, &v) in &self.param_vars {
            if let Some(g) = grads.wrt(v) {
                store.get_mut(id).grad.add_assign(g);
            }
        }
        Ok(grads)
    }

    fn slot<'a>(&self, grads: &'a mut [Option<Tensor>], v: Var) -> Option<&'a mut Tensor> {
        let node = &self.nodes[v.0];
        if !node.needs_grad {
            return None;
        }
        let [r, c] = node.value.shape();
        Some(grads[v.0].get_or_insert_with(|| Tensor::zeros(r, c)))
    }

    fn propagate(&self, node: &Node, gout: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = &node.value;
        match &node.op {
            Op::Leaf | Op::Param | Op::StopGradient => {}
            Op::Reshape(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for (o, g) in ga.data_mut().iter_mut().zip(gout.data()) {
                        *o += *g;
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if let Some(ga) = self.slot(grads, *a) {
                    matmul_nt_acc(ga.data_mut(), gout, vb);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    matmul_tn_acc(gb.data_mut(), va, gout);
                }
            }
            Op::AddBias(a, bias) => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.add_assign(gout);
                }
                if let Some(gb) = self.slot(grads, *bias) {
                    let gb = gb.data_mut();
                    for r in 0..gout.rows() {
                        for (o, g) in gb.iter_mut().zip(gout.row(r)) {
                            *o += *g;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.add_assign(gout);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    gb.add_assign(gout);
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.add_assign(gout);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for (o, g) in gb.data_mut().iter_mut().zip(gout.data()) {
                        *o -= *g;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if let Some(ga) = self.slot(grads, *a) {
                    for ((o, g), y) in ga.data_mut().iter_mut().zip(gout.data()).zip(vb.data()) {
                        *o += g * y;
                    }
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for ((o, g), x) in gb.data_mut().iter_mut().zip(gout.data()).zip(va.data()) {
                        *o += g * x;
                    }
                }
            }
            Op::Scale(a, s) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for (o, g) in ga.data_mut().iter_mut().zip(gout.data()) {
                        *o += g * s;
                    }
                }
            }
            Op::OneMinus(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for (o, g) in ga.data_mut().iter_mut().zip(gout.data()) {
                        *o -= *g;
                    }
                }
            }
            Op::Sigmoid(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for ((o, g), y) in ga.data_mut().iter_mut().zip(gout.data()).zip(out.data()) {
                        *o += g * y * (1.0 - y);
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for ((o, g), y) in ga.data_mut().iter_mut().zip(gout.data()).zip(out.data()) {
                        *o += g * (1.0 - y * y);
                    }
                }
            }
            Op::Relu(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for ((o, g), y) in ga.data_mut().iter_mut().zip(gout.data()).zip(out.data()) {
                        if *y > 0.0 {
                            *o += *g;
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    if let Some(gp) = self.slot(grads, p) {
                        for r in 0..gout.rows() {
                            for (o, g) in gp.row_mut(r).iter_mut().zip(&gout.row(r)[off..off + w]) {
                                *o += *g;
                            }
                        }
                    }
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let cols = gout.cols();
                let mut off = 0;
                for &p in parts {
                    let n = self.shape(p)[0] * cols;
                    if let Some(gp) = self.slot(grads, p) {
                        for (o, g) in gp.data_mut().iter_mut().zip(&gout.data()[off..off + n]) {
                            *o += *g;
                        }
                    }
                    off += n;
                }
            }
            Op::SliceCols(a, start) => {
                if let Some(ga) = self.slot(grads, *a) {
                    let w = gout.cols();
                    for r in 0..gout.rows() {
                        for (o, g) in ga.row_mut(r)[*start..*start + w].iter_mut().zip(gout.row(r)) {
                            *o += *g;
                        }
                    }
                }
            }
            Op::SliceRows(a, start) => {
                if let Some(ga) = self.slot(grads, *a) {
                    let cols = gout.cols();
                    let region = &mut ga.data_mut()[start * cols..start * cols + gout.len()];
                    for (o, g) in region.iter_mut().zip(gout.data()) {
                        *o += *g;
                    }
                }
            }
            Op::SelectRows(mask, a, b) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for (r, &m) in mask.iter().enumerate() {
                        if m {
                            for (o, g) in ga.row_mut(r).iter_mut().zip(gout.row(r)) {
                                *o += *g;
                            }
                        }
                    }
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for (r, &m) in mask.iter().enumerate() {
                        if !m {
                            for (o, g) in gb.row_mut(r).iter_mut().zip(gout.row(r)) {
                                *o += *g;
                            }
                        }
                    }
                }
            }
            Op::Sum(a) => {
                let g = gout.item();
                if let Some(ga) = self.slot(grads, *a) {
                    ga.data_mut().iter_mut().for_each(|o| *o += g);
                }
            }
            Op::Mean(a) => {
                let n = self.value(*a).len() as f64;
                let g = gout.item() / n;
                if let Some(ga) = self.slot(grads, *a) {
                    ga.data_mut().iter_mut().for_each(|o| *o += g);
                }
            }
            Op::RowCosine(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let rows = va.rows();
                let mut da = Tensor::zeros(rows, va.cols());
                let mut db = Tensor::zeros(rows, va.cols());
                for r in 0..rows {
                    let (x, y) = (va.row(r), vb.row(r));
                    let Some((dot, na, nb)) = cosine_parts(x, y) else { continue };
                    let g = gout.get(r, 0);
                    let cos = dot / (na * nb);
                    let inv = 1.0 / (na * nb);
                    for k in 0..x.len() {
                        da.row_mut(r)[k] = g * (y[k] * inv - cos * x[k] / (na * na));
                        db.row_mut(r)[k] = g * (x[k] * inv - cos * y[k] / (nb * nb));
                    }
                }
                if let Some(ga) = self.slot(grads, *a) {
                    ga.add_assign(&da);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    gb.add_assign(&db);
                }
            }
            Op::MeanSquaredError(p, target) => {
                let vp = self.value(*p);
                let scale = 2.0 * gout.item() / vp.len() as f64;
                if let Some(gp) = self.slot(grads, *p) {
                    for ((o, x), t) in gp.data_mut().iter_mut().zip(vp.data()).zip(target.data()) {
                        *o += scale * (x - t);
                    }
                }
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// `(dot, |x|, |y|)` with norms clamped at [`COSINE_EPS`], or `None` when
/// both vectors are numerically zero.
fn cosine_parts(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let mut dot = 0.0;
    let mut xx = 0.0;
    let mut yy = 0.0;
    for (a, b) in x.iter().zip(y) {
        dot += a * b;
        xx += a * a;
        yy += b * b;
    }
    let (na, nb) = (libm::sqrt(xx), libm::sqrt(yy));
    if na < COSINE_EPS && nb < COSINE_EPS {
        return None;
    }
    Some((dot, na.max(COSINE_EPS), nb.max(COSINE_EPS)))
}
