use std::sync::Arc;

use crate::autodiff::{ParamSet, Tape, Var};
use crate::gnn::{Activation, Mlp};
use crate::rng::SeededRng;
use crate::{Result, Tensor};

/// Sinusoidal position code of `t`: interleaved `sin(t·ω_i), cos(t·ω_i)` with
/// `ω_i = 10000^(-2i/dim)`.
pub fn sinusoidal_embedding(t: usize, dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(dim);
    for i in 0..dim / 2 {
        let omega = 10000f64.powf(-2.0 * i as f64 / dim as f64);
        let arg = t as f64 * omega;
        out.push(arg.sin());
        out.push(arg.cos());
    }
    out
}

/// `f(t)`: sinusoidal code followed by a two-layer MLP into the hidden width.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeEmbedder {
    pub dim: usize,
    pub mlp: Mlp,
}

impl TimeEmbedder {
    pub fn new(params: &mut ParamSet, dim: usize, hidden: usize, activation: Activation, rng: &mut SeededRng) -> Self {
        Self { dim, mlp: Mlp::new(params, "time", &[dim, hidden, hidden], activation, rng) }
    }

    /// One embedding row per step.
    pub fn forward(&self, tape: &mut Tape, params: &[Var], steps: &[usize]) -> Result<Var> {
        let mut data = Vec::with_capacity(steps.len() * self.dim);
        for &t in steps {
            data.extend(sinusoidal_embedding(t, self.dim));
        }
        let raw = tape.constant(Tensor::from_vec(steps.len(), self.dim, data)?);
        self.mlp.forward(tape, params, raw)
    }

    /// Embedding rows expanded to one row per entry of `groups`.
    pub fn per_row(&self, tape: &mut Tape, params: &[Var], steps: &[usize], groups: &Arc<[usize]>) -> Result<Var> {
        let e = self.forward(tape, params, steps)?;
        tape.gather_rows(e, groups)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_step_code() {
        let e = sinusoidal_embedding(0, 128);
        assert_eq!(e.len(), 128);
        for pair in e.chunks(2) {
            assert_eq!(pair, &[0.0, 1.0]);
        }
    }

    #[test]
    fn codes_are_injective_over_steps() {
        // Exhaustive scan: every pair of steps in 1..=T differs somewhere.
        let t_max = 10_000;
        let codes: Vec<Vec<f64>> = (1..=t_max).map(|t| sinusoidal_embedding(t, 128)).collect();
        // The two highest-frequency coordinates already order steps locally;
        // compare through a lexicographic sort to find any duplicate.
        let mut order: Vec<usize> = (0..codes.len()).collect();
        order.sort_by(|&a, &b| {
            codes[a]
                .iter()
                .zip(&codes[b])
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for w in order.windows(2) {
            assert_ne!(codes[w[0]], codes[w[1]], "steps {} and {}", w[0] + 1, w[1] + 1);
        }
    }

    #[test]
    fn embedding_is_deterministic() {
        let mut params = ParamSet::new();
        let mut rng = SeededRng::new(0);
        let emb = TimeEmbedder::new(&mut params, 16, 8, Activation::Relu, &mut rng);
        let run = || {
            let mut tape = Tape::new();
            let p = params.bind_frozen(&mut tape);
            let out = emb.forward(&mut tape, &p, &[5]).unwrap();
            tape.value(out).clone()
        };
        assert_eq!(run(), run());
        assert_eq!(run().shape(), (1, 8));
    }
}
