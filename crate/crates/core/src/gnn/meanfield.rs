use crate::autodiff::{ParamSet, Tape, Var};
use crate::gnn::node::{backbone_linear, combine};
use crate::gnn::{apply_dropout, DenoiserConfig, Linear, NodeInput};
use crate::rng::SeededRng;
use crate::{Error, Result, Tensor};

/// Plain backbone GNN with a linear softmax head: a classifier whose joint
/// output factorizes over nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanField {
    config: DenoiserConfig,
    attr_dim: usize,
    num_classes: usize,
    params: ParamSet,
    layers: Vec<Linear>,
    head: Linear,
}

impl MeanField {
    /// Uses the backbone, depth, width, activation and dropout of `config`.
    pub fn new(config: &DenoiserConfig, attr_dim: usize, num_classes: usize, rng: &mut SeededRng) -> Result<Self> {
        if config.num_layers == 0 || config.hidden_dim == 0 {
            return Err(Error::Config("mean-field GNN needs layers and width".into()));
        }
        let mut params = ParamSet::new();
        let mut width = attr_dim;
        let layers = (0..config.num_layers)
            .map(|l| {
                let lin = backbone_linear(
                    &mut params,
                    &format!("mf.layer{l}"),
                    config.backbone,
                    width,
                    config.hidden_dim,
                    rng,
                );
                width = config.hidden_dim;
                lin
            })
            .collect();
        let head = Linear::new(&mut params, "mf.head", width, num_classes, rng);
        Ok(Self { config: config.clone(), attr_dim, num_classes, params, layers, head })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    /// Zeroes the head so every node gets uniform class probabilities.
    pub fn zero_head(&mut self) {
        let head = self.head.clone();
        head.zero(&mut self.params);
    }

    /// Class logits on the tape.
    pub fn logits(
        &self,
        tape: &mut Tape,
        params: &[Var],
        input: &NodeInput,
        mut dropout: Option<&mut SeededRng>,
    ) -> Result<Var> {
        if input.x.cols() != self.attr_dim {
            return Err(Error::shape(
                "meanfield",
                format!("attributes have {} columns, expected {}", input.x.cols(), self.attr_dim),
            ));
        }
        let mut h = tape.constant(input.x.clone());
        for layer in &self.layers {
            let h_in = apply_dropout(tape, h, self.config.dropout, dropout.as_deref_mut())?;
            h = combine(tape, params, self.config.backbone, layer, &input.propagation, h_in, self.config.activation)?;
        }
        let h = apply_dropout(tape, h, self.config.dropout, dropout)?;
        self.head.forward(tape, params, h)
    }
}

/// Row-wise class probabilities `p_φ(y_i | x, G)`.
pub fn meanfield_forward(model: &MeanField, input: &NodeInput) -> Result<Tensor> {
    let mut tape = Tape::new();
    let params = model.params().bind_frozen(&mut tape);
    let logits = model.logits(&mut tape, &params, input, None)?;
    let probs = tape.softmax_rows(logits)?;
    Ok(tape.value(probs).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::Backbone;
    use crate::graph::{generate_homophily_graph, HomophilySpec};

    fn setup(seed: u64) -> (MeanField, NodeInput) {
        let mut rng = SeededRng::new(seed);
        let g = generate_homophily_graph(
            &HomophilySpec { num_nodes: 20, num_classes: 3, p_intra: 0.3, p_inter: 0.05, feature_noise: 1.0 },
            seed,
        )
        .unwrap();
        let m = MeanField::new(&DenoiserConfig::node(2, 8), 3, 3, &mut rng).unwrap();
        (m, NodeInput::new(&g, Backbone::Gcn))
    }

    #[test]
    fn rows_sum_to_one() {
        let (m, input) = setup(0);
        let p = meanfield_forward(&m, &input).unwrap();
        for r in 0..p.rows() {
            assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_logits_are_uniform() {
        let (mut m, input) = setup(1);
        m.zero_head();
        let p = meanfield_forward(&m, &input).unwrap();
        assert!(p.data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }
}
