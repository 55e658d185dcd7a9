use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, ParamId, ParamStore, Partition, Tensor, Var};
use crate::error::{shape_err, Result};

/// Uniform in `(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
fn init_weights<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, rows: usize, cols: usize) -> Tensor {
    let bound = 1.0 / libm::sqrt(fan_in.max(1) as f64);
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::from_vec(rows, cols, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Tanh => g.tanh(x),
            Activation::Relu => g.relu(x),
            Activation::Identity => x,
        }
    }
}

/// Affine map `x W + b` with `W: in x out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        partition: Partition,
        input: usize,
        output: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.add(format!("{name}.weight"), partition, init_weights(rng, input, input, output))?;
        let bias = store.add(format!("{name}.bias"), partition, Tensor::zeros(1, output))?;
        Ok(Self {
            weight,
            bias,
            input,
            output,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let xw = g.matmul(x, w)?;
        g.add_bias(xw, b)
    }
}

/// Stack of affine layers with an activation between consecutive layers
/// (none after the last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub name: String,
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Mlp {
    /// `dims = [input, hidden.., output]`, at least two entries.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        partition: Partition,
        dims: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(shape_err(name, format!("invalid MLP dims {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), partition, w[0], w[1], rng))
            .collect::<Result<_>>()?;
        Ok(Self {
            name: name.into(),
            layers,
            activation,
        })
    }

    /// Draws fresh weights, zeroes biases and clears optimizer state.
    pub fn reinit<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        for l in &self.layers {
            let w = store.get_mut(l.weight);
            w.value = init_weights(rng, l.input, l.input, l.output);
            w.reset_optimizer();
            let b = store.get_mut(l.bias);
            b.value.fill(0.0);
            b.reset_optimizer();
        }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].output
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let width = g.shape(h)[1];
            if width != layer.input {
                return Err(shape_err(
                    &format!("{}.{i}", self.name),
                    format!("input width {width}, layer expects {}", layer.input),
                ));
            }
            h = layer.forward(g, store, h)?;
            if i < last {
                h = self.activation.apply(g, h);
            }
        }
        Ok(h)
    }
}

/// Gated recurrent unit:
///
/// ```text
/// z  = sigmoid(x Wz + h Uz + bz)
/// r  = sigmoid(x Wr + h Ur + br)
/// h~ = tanh(x Wh + (r * h) Uh + bh)
/// h' = (1 - z) * h + z * h~
/// ```
///
/// `Wz|Wr|Wh` are stored side by side as one `input x 3h` matrix, `Uz|Ur` as
/// one `h x 2h` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruCell {
    pub name: String,
    pub w_input: ParamId,
    pub u_gates: ParamId,
    pub u_candidate: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        partition: Partition,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if input == 0 || hidden == 0 {
            return Err(shape_err(name, "GRU widths must be positive"));
        }
        let w_input = store.add(format!("{name}.w_input"), partition, init_weights(rng, hidden, input, 3 * hidden))?;
        let u_gates = store.add(format!("{name}.u_gates"), partition, init_weights(rng, hidden, hidden, 2 * hidden))?;
        let u_candidate = store.add(format!("{name}.u_candidate"), partition, init_weights(rng, hidden, hidden, hidden))?;
        let bias = store.add(format!("{name}.bias"), partition, Tensor::zeros(1, 3 * hidden))?;
        Ok(Self {
            name: name.into(),
            w_input,
            u_gates,
            u_candidate,
            bias,
            input,
            hidden,
        })
    }

    /// `x W + b` for a batch of inputs; reusable across steps when the
    /// inputs are known in advance.
    pub fn project_input(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let width = g.shape(x)[1];
        if width != self.input {
            return Err(shape_err(&self.name, format!("input width {width}, expected {}", self.input)));
        }
        let w = g.param(store, self.w_input);
        let b = g.param(store, self.bias);
        let xw = g.matmul(x, w)?;
        g.add_bias(xw, b)
    }

    /// One step from an already projected input (see [`GruCell::project_input`]).
    pub fn step_projected(&self, g: &mut Graph, store: &ParamStore, xw: Var, h: Var) -> Result<Var> {
        let d = self.hidden;
        let (sx, sh) = (g.shape(xw), g.shape(h));
        if sh[1] != d || sx != [sh[0], 3 * d] {
            return Err(shape_err(
                &self.name,
                format!("projected input {sx:?}, state {sh:?}, hidden {d}"),
            ));
        }
        let ug = g.param(store, self.u_gates);
        let uc = g.param(store, self.u_candidate);
        let hu = g.matmul(h, ug)?;
        let x_gates = g.slice_cols(xw, 0, 2 * d)?;
        let gates = g.add(x_gates, hu)?;
        let gates = g.sigmoid(gates);
        let z = g.slice_cols(gates, 0, d)?;
        let r = g.slice_cols(gates, d, d)?;
        let rh = g.mul(r, h)?;
        let rhu = g.matmul(rh, uc)?;
        let x_cand = g.slice_cols(xw, 2 * d, d)?;
        let cand = g.add(x_cand, rhu)?;
        let cand = g.tanh(cand);
        let keep = g.one_minus(z);
        let kept = g.mul(keep, h)?;
        let fresh = g.mul(z, cand)?;
        g.add(kept, fresh)
    }

    pub fn step(&self, g: &mut Graph, store: &ParamStore, x: Var, h: Var) -> Result<Var> {
        let xw = self.project_input(g, store, x)?;
        self.step_projected(g, store, xw, h)
    }

    /// Runs the cell over `inputs` from `h0`, returning every hidden state.
    pub fn unroll(&self, g: &mut Graph, store: &ParamStore, inputs: &[Var], h0: Var) -> Result<Vec<Var>> {
        let mut h = h0;
        let mut out = Vec::with_capacity(inputs.len());
        for &x in inputs {
            h = self.step(g, store, x, h)?;
            out.push(h);
        }
        Ok(out)
    }
}

/// GRU encoder / GRU decoder pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seq2Seq {
    pub encoder: GruCell,
    pub decoder: GruCell,
}

impl Seq2Seq {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        partition: Partition,
        source_width: usize,
        decoder_width: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            encoder: GruCell::new(store, &format!("{name}.encoder"), partition, source_width, hidden, rng)?,
            decoder: GruCell::new(store, &format!("{name}.decoder"), partition, decoder_width, hidden, rng)?,
        })
    }

    /// Encodes `source` (possibly empty) from a zero state, then decodes one
    /// step per decoder input starting from the final encoder state. Returns
    /// the decoder hidden states.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, source: &[Var], decoder_inputs: &[Var]) -> Result<Vec<Var>> {
        let Some(&first) = decoder_inputs.first() else {
            return Err(shape_err("seq2seq", "decoder needs at least one input"));
        };
        let rows = g.shape(first)[0];
        let mut h = g.zeros(rows, self.encoder.hidden);
        for &x in source {
            h = self.encoder.step(g, store, x, h)?;
        }
        self.decoder.unroll(g, store, decoder_inputs, h)
    }
}
