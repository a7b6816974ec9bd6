use crate::autodiff::{ParamSet, Tape, Var};
use crate::gnn::{
    apply_dropout, Activation, Backbone, Denoiser, DenoiserConfig, Linear, Mlp, NodeInput, Propagation, TargetKind,
    TargetLayout, TimeEmbedder,
};
use crate::rng::SeededRng;
use crate::{Error, Result};

/// One backbone update. GCN: `act(Â h W + b)`; mean-aggregate:
/// `act([h ∥ Â h] W + b)`.
pub(crate) fn combine(
    tape: &mut Tape,
    params: &[Var],
    backbone: Backbone,
    linear: &Linear,
    propagation: &Propagation,
    h: Var,
    activation: Activation,
) -> Result<Var> {
    let z = match backbone {
        Backbone::Gcn => {
            let hw = tape.matmul(h, params[linear.weight.index()])?;
            let agg = propagation.apply(tape, hw)?;
            tape.add_bias(agg, params[linear.bias.index()])?
        }
        Backbone::MeanAggregate => {
            let agg = propagation.apply(tape, h)?;
            let both = tape.concat_cols(&[h, agg])?;
            linear.forward(tape, params, both)?
        }
    };
    activation.apply(tape, z)
}

pub(crate) fn backbone_linear(
    params: &mut ParamSet,
    name: &str,
    backbone: Backbone,
    in_dim: usize,
    out_dim: usize,
    rng: &mut SeededRng,
) -> Linear {
    let fan_in = match backbone {
        Backbone::Gcn => in_dim,
        Backbone::MeanAggregate => 2 * in_dim,
    };
    Linear::new(params, name, fan_in, out_dim, rng)
}

/// Node-target residual estimator.
///
/// With `h⁰ = x ∥ y⁽ᵗ⁾`, every layer computes
/// `hˡ = (COMBINE(hˡ⁻¹) + f(t)) ∥ y⁽ᵗ⁾`, and an MLP head maps `hᴸ` to one
/// residual row per node.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeDenoiser {
    config: DenoiserConfig,
    attr_dim: usize,
    num_classes: usize,
    params: ParamSet,
    time: TimeEmbedder,
    layers: Vec<Linear>,
    head: Mlp,
}

impl NodeDenoiser {
    pub fn new(config: &DenoiserConfig, attr_dim: usize, num_classes: usize, rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        if config.target_kind != TargetKind::Node {
            return Err(Error::Config("node denoiser needs target_kind = node".into()));
        }
        let mut params = ParamSet::new();
        let hidden = config.hidden_dim;
        let time = TimeEmbedder::new(&mut params, config.time_embed_dim, hidden, config.activation, rng);
        let mut layers = Vec::with_capacity(config.num_layers);
        let mut width = attr_dim + num_classes;
        for l in 0..config.num_layers {
            layers.push(backbone_linear(&mut params, &format!("layer{l}"), config.backbone, width, hidden, rng));
            width = hidden + num_classes;
        }
        let mut dims = vec![width];
        dims.extend(std::iter::repeat_n(hidden, config.head_layers - 1));
        dims.push(num_classes);
        let head = Mlp::new(&mut params, "head", &dims, config.activation, rng);
        Ok(Self { config: config.clone(), attr_dim, num_classes, params, time, layers, head })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn attr_dim(&self) -> usize {
        self.attr_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Zeroes the final head layer, so the network outputs zeros.
    pub fn zero_head(&mut self) {
        let last = self.head.last().clone();
        last.zero(&mut self.params);
    }
}

impl Denoiser for NodeDenoiser {
    type Input = NodeInput;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn target_cols(&self) -> usize {
        self.num_classes
    }

    fn forward(
        &self,
        tape: &mut Tape,
        params: &[Var],
        input: &NodeInput,
        y_t: Var,
        steps: &[usize],
        mut dropout: Option<&mut SeededRng>,
    ) -> Result<Var> {
        let y_shape = tape.value(y_t).shape();
        if y_shape != (input.num_nodes(), self.num_classes) {
            return Err(Error::shape(
                "node_denoiser",
                format!(
                    "noisy target is {}x{}, expected {}x{}",
                    y_shape.0,
                    y_shape.1,
                    input.num_nodes(),
                    self.num_classes
                ),
            ));
        }
        if input.x.cols() != self.attr_dim {
            return Err(Error::shape(
                "node_denoiser",
                format!("attributes have {} columns, expected {}", input.x.cols(), self.attr_dim),
            ));
        }
        if steps.len() != input.num_groups() {
            return Err(Error::shape("node_denoiser", "one step per graph required"));
        }
        let x = tape.constant(input.x.clone());
        let time = self.time.per_row(tape, params, steps, input.row_groups())?;
        let mut h = tape.concat_cols(&[x, y_t])?;
        for layer in &self.layers {
            let h_in = apply_dropout(tape, h, self.config.dropout, dropout.as_deref_mut())?;
            let z =
                combine(tape, params, self.config.backbone, layer, &input.propagation, h_in, self.config.activation)?;
            let z = tape.add(z, time)?;
            h = tape.concat_cols(&[z, y_t])?;
        }
        let h = apply_dropout(tape, h, self.config.dropout, dropout)?;
        self.head.forward(tape, params, h)
    }
}
