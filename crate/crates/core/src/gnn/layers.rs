use crate::autodiff::{glorot_uniform, ParamId, ParamSet, Tape, Var};
use crate::gnn::Activation;
use crate::rng::SeededRng;
use crate::{Result, Tensor};

/// Affine map `x W + b` with Glorot weights and zero bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(params: &mut ParamSet, name: &str, in_dim: usize, out_dim: usize, rng: &mut SeededRng) -> Self {
        let weight = params.add(format!("{name}.weight"), glorot_uniform(in_dim, out_dim, rng));
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(1, out_dim));
        Self { weight, bias, in_dim, out_dim }
    }

    pub fn forward(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var> {
        let xw = tape.matmul(x, params[self.weight.index()])?;
        tape.add_bias(xw, params[self.bias.index()])
    }

    /// Sets weight and bias to zero, making the layer the zero map.
    pub fn zero(&self, params: &mut ParamSet) {
        for id in [self.weight, self.bias] {
            params.get_mut(id).value.data_mut().fill(0.0);
        }
    }
}

/// Stack of [`Linear`] layers with an activation between consecutive layers
/// (none after the last).
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Mlp {
    /// `dims = [in, hidden.., out]`; `dims.len() - 1` layers.
    pub fn new(params: &mut ParamSet, name: &str, dims: &[usize], activation: Activation, rng: &mut SeededRng) -> Self {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(params, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Self { layers, activation }
    }

    pub fn forward(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, params, h)?;
            if i + 1 < self.layers.len() {
                h = self.activation.apply(tape, h)?;
            }
        }
        Ok(h)
    }

    pub fn last(&self) -> &Linear {
        self.layers.last().expect("an MLP has at least one layer")
    }
}
