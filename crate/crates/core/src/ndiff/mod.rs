//! Dense tensors with reverse-mode automatic differentiation, plus the layer
//! kinds used by the models in this crate.

pub mod check;
mod graph;
mod layers;
mod params;
mod tensor;

pub use graph::{Gradients, Graph, Var, COSINE_EPS};
pub use layers::{Activation, GruCell, Linear, Mlp, Seq2Seq};
pub use params::{AdamConfig, Param, ParamId, ParamStore, Partition};
pub use tensor::Tensor;

use crate::error::Result;

/// Cosine similarity of two equally shaped tensors, flattened.
///
/// Returns the `1 x 1` result and whether it was degenerate (both norms below
/// [`COSINE_EPS`], in which case the value is 0).
pub fn cosine_similarity(g: &mut Graph, a: Var, b: Var) -> Result<(Var, bool)> {
    let [r, c] = g.shape(a);
    if g.shape(b) != [r, c] {
        return Err(crate::error::shape_err(
            "cosine_similarity",
            alloc::format!("{:?} vs {:?}", [r, c], g.shape(b)),
        ));
    }
    let before = g.degenerate_cosines();
    let fa = g.reshape(a, 1, r * c)?;
    let fb = g.reshape(b, 1, r * c)?;
    let cos = g.row_cosine(fa, fb)?;
    Ok((cos, g.degenerate_cosines() > before))
}
