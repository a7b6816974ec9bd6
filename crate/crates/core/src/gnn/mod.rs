//! Message-passing networks: the node-target and edge-target denoisers and
//! the mean-field classifier.

mod config;
mod edge;
mod input;
mod layers;
mod meanfield;
mod node;
mod propagation;
mod time;

pub use config::{Activation, Backbone, DenoiserConfig, EdgeAggregation, TargetKind};
pub use edge::EdgeDenoiser;
pub use input::{EdgeInput, NodeInput, TargetLayout};
pub use layers::{Linear, Mlp};
pub use meanfield::{meanfield_forward, MeanField};
pub use node::NodeDenoiser;
pub use propagation::Propagation;
pub use time::{sinusoidal_embedding, TimeEmbedder};

use crate::autodiff::{ParamSet, Tape, Var};
use crate::rng::SeededRng;
use crate::{Result, Tensor};

/// A residual estimator ε_θ(x, y⁽ᵗ⁾, G, t) over some conditioning input.
pub trait Denoiser {
    type Input: TargetLayout;

    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;

    /// Width of a target row.
    fn target_cols(&self) -> usize;

    /// Residual estimate on `tape`. `steps` holds one diffusion step per
    /// group of the input. Dropout is active only when `dropout` is given.
    fn forward(
        &self,
        tape: &mut Tape,
        params: &[Var],
        input: &Self::Input,
        y_t: Var,
        steps: &[usize],
        dropout: Option<&mut SeededRng>,
    ) -> Result<Var>;

    /// Gradient-free residual estimate with one step for every group.
    fn predict(&self, input: &Self::Input, y_t: &Tensor, step: usize) -> Result<Tensor> {
        let mut tape = Tape::new();
        let params = self.params().bind_frozen(&mut tape);
        let y = tape.constant(y_t.clone());
        let steps = vec![step; input.num_groups()];
        let out = self.forward(&mut tape, &params, input, y, &steps, None)?;
        Ok(tape.value(out).clone())
    }
}

/// Inverted dropout: zeroes entries with probability `p` and rescales the
/// survivors by `1 / (1 - p)`.
pub(crate) fn apply_dropout(tape: &mut Tape, h: Var, p: f64, rng: Option<&mut SeededRng>) -> Result<Var> {
    let Some(rng) = rng else { return Ok(h) };
    if p <= 0.0 {
        return Ok(h);
    }
    let (r, c) = tape.value(h).shape();
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..r * c).map(|_| if rng.uniform() < p { 0.0 } else { keep }).collect();
    let mask = tape.constant(Tensor::from_vec(r, c, mask)?);
    tape.mul(h, mask)
}
