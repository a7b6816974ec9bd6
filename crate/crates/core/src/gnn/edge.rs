use crate::autodiff::{ParamSet, Tape, Var};
use crate::gnn::{apply_dropout, Denoiser, DenoiserConfig, EdgeInput, Linear, Mlp, TargetKind, TimeEmbedder};
use crate::rng::SeededRng;
use crate::{Error, Result, Tensor};

#[derive(Clone, Debug, PartialEq)]
struct EdgeLayer {
    edge: Linear,
    update: Mlp,
}

/// Pair-target residual estimator built from GINE-style layers.
///
/// Node states start at zero. Each layer embeds `edge_x ∥ y⁽ᵗ⁾` per pair,
/// updates `h_i ← MLP(h_i + Σ_j act(h_j + e_ji)) + f(t)`, and the head reads
/// `h_i ∥ h_j ∥ y⁽ᵗ⁾_ij ∥ edge_x_ij` for every pair. The head is evaluated in
/// both node orders and averaged, so mirrored pairs with mirrored inputs get
/// equal outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeDenoiser {
    config: DenoiserConfig,
    edge_dim: usize,
    target_cols: usize,
    params: ParamSet,
    time: TimeEmbedder,
    layers: Vec<EdgeLayer>,
    head: Mlp,
}

impl EdgeDenoiser {
    pub fn new(config: &DenoiserConfig, edge_dim: usize, target_cols: usize, rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        if config.target_kind != TargetKind::Edge {
            return Err(Error::Config("edge denoiser needs target_kind = edge".into()));
        }
        let hidden = config.hidden_dim;
        let mut params = ParamSet::new();
        let time = TimeEmbedder::new(&mut params, config.time_embed_dim, hidden, config.activation, rng);
        let layers = (0..config.num_layers)
            .map(|l| EdgeLayer {
                edge: Linear::new(&mut params, &format!("layer{l}.edge"), edge_dim + target_cols, hidden, rng),
                update: Mlp::new(
                    &mut params,
                    &format!("layer{l}.update"),
                    &[hidden, hidden, hidden],
                    config.activation,
                    rng,
                ),
            })
            .collect();
        let mut dims = vec![2 * hidden + target_cols + edge_dim];
        dims.extend(std::iter::repeat_n(hidden, config.head_layers - 1));
        dims.push(target_cols);
        let head = Mlp::new(&mut params, "head", &dims, config.activation, rng);
        Ok(Self { config: config.clone(), edge_dim, target_cols, params, time, layers, head })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn edge_dim(&self) -> usize {
        self.edge_dim
    }
}

impl Denoiser for EdgeDenoiser {
    type Input = EdgeInput;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn target_cols(&self) -> usize {
        self.target_cols
    }

    fn forward(
        &self,
        tape: &mut Tape,
        params: &[Var],
        input: &EdgeInput,
        y_t: Var,
        steps: &[usize],
        mut dropout: Option<&mut SeededRng>,
    ) -> Result<Var> {
        let pairs = input.src.len();
        if tape.value(y_t).shape() != (pairs, self.target_cols) {
            return Err(Error::shape(
                "edge_denoiser",
                format!("noisy target is {:?}, expected ({pairs}, {})", tape.value(y_t).shape(), self.target_cols),
            ));
        }
        if input.edge_x.cols() != self.edge_dim {
            return Err(Error::shape(
                "edge_denoiser",
                format!("edge attributes have {} columns, expected {}", input.edge_x.cols(), self.edge_dim),
            ));
        }
        let act = self.config.activation;
        let hidden = self.config.hidden_dim;
        let edge_x = tape.constant(input.edge_x.clone());
        let time = self.time.per_row(tape, params, steps, input.node_groups())?;
        let pair_in = tape.concat_cols(&[edge_x, y_t])?;
        let msg_in = tape.gather_rows(pair_in, &input.msg_pairs)?;
        let mut h = tape.constant(Tensor::zeros(input.num_nodes, hidden));
        for layer in &self.layers {
            let e = layer.edge.forward(tape, params, msg_in)?;
            let from = tape.gather_rows(h, &input.msg_src)?;
            let msg = tape.add(from, e)?;
            let msg = act.apply(tape, msg)?;
            let msg = tape.scale_rows(msg, &input.msg_weight)?;
            let agg = tape.scatter_add_rows(msg, &input.msg_dst, input.num_nodes)?;
            let z = tape.add(h, agg)?;
            let z = layer.update.forward(tape, params, z)?;
            let z = tape.add(z, time)?;
            h = apply_dropout(tape, z, self.config.dropout, dropout.as_deref_mut())?;
        }
        let hi = tape.gather_rows(h, &input.src)?;
        let hj = tape.gather_rows(h, &input.dst)?;
        let forward = tape.concat_cols(&[hi, hj, y_t, edge_x])?;
        let mirrored = tape.concat_cols(&[hj, hi, y_t, edge_x])?;
        let a = self.head.forward(tape, params, forward)?;
        let b = self.head.forward(tape, params, mirrored)?;
        let sum = tape.add(a, b)?;
        tape.scale(sum, 0.5)
    }
}
