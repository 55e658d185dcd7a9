use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Dense row-major matrix of `f64`.
///
/// Every value in the autodiff graph is two-dimensional; a vector is a
/// `1 x n` tensor and a batch of vectors stacks one sample per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor data length");
        Self { rows, cols, data }
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        let cols = data.len();
        Self::from_vec(1, cols, data)
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_vec(1, 1, vec![value])
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `out += a * b` for `a: r x k`, `b: k x c`.
pub(crate) fn matmul_acc(out: &mut [f64], a: &Tensor, b: &Tensor) {
    let (r, k, c) = (a.rows, a.cols, b.cols);
    for i in 0..r {
        let arow = &a.data[i * k..(i + 1) * k];
        let orow = &mut out[i * c..(i + 1) * c];
        axpy_rows(orow, arow, &b.data, c);
    }
}

/// `out += sum_p coef[p] * rows[p]`, eight rows at a time.
fn axpy_rows(out: &mut [f64], coef: &[f64], rows: &[f64], c: usize) {
    let out = &mut out[..c];
    let mut p = 0;
    while p + 8 <= coef.len() {
        let a = &coef[p..p + 8];
        let b = &rows[p * c..(p + 8) * c];
        let (b0, b1, b2, b3) = (&b[..c], &b[c..2 * c], &b[2 * c..3 * c], &b[3 * c..4 * c]);
        let (b4, b5, b6, b7) = (&b[4 * c..5 * c], &b[5 * c..6 * c], &b[6 * c..7 * c], &b[7 * c..8 * c]);
        for j in 0..c {
            out[j] += (a[0] * b0[j] + a[1] * b1[j] + a[2] * b2[j] + a[3] * b3[j])
                + (a[4] * b4[j] + a[5] * b5[j] + a[6] * b6[j] + a[7] * b7[j]);
        }
        p += 8;
    }
    while p < coef.len() {
        let av = coef[p];
        let brow = &rows[p * c..(p + 1) * c];
        for (o, &bv) in out.iter_mut().zip(brow) {
            *o += av * bv;
        }
        p += 1;
    }
}

/// `out += a * b^T` for `a: r x c`, `b: k x c`; `out: r x k`.
pub(crate) fn matmul_nt_acc(out: &mut [f64], a: &Tensor, b: &Tensor) {
    let (r, c, k) = (a.rows, a.cols, b.rows);
    for i in 0..r {
        let arow = &a.data[i * c..(i + 1) * c];
        for j in 0..k {
            let brow = &b.data[j * c..(j + 1) * c];
            let mut s = 0.0;
            for (x, y) in arow.iter().zip(brow) {
                s += x * y;
            }
            out[i * k + j] += s;
        }
    }
}

/// `out += a^T * b` for `a: r x k`, `b: r x c`; `out: k x c`.
pub(crate) fn matmul_tn_acc(out: &mut [f64], a: &Tensor, b: &Tensor) {
    let (r, k, c) = (a.rows, a.cols, b.cols);
    for i in 0..r {
        let arow = &a.data[i * k..(i + 1) * k];
        let brow = &b.data[i * c..(i + 1) * c];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * c..(p + 1) * c];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}
