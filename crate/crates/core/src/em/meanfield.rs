use std::sync::Arc;

use crate::autodiff::Tape;
use crate::em::Buffer;
use crate::gnn::{meanfield_forward, DenoiserConfig, MeanField, NodeInput};
use crate::graph::{one_hot_relax, Graph};
use crate::rng::SeededRng;
use crate::train::OptimizerConfig;
use crate::{Error, Result, Tensor};

/// Fits a mean-field classifier to the labeled nodes of `graph` by
/// cross-entropy. Returns the model and its per-step losses.
pub fn train_meanfield(
    graph: &Graph,
    config: &DenoiserConfig,
    opt: &OptimizerConfig,
    rng: &mut SeededRng,
) -> Result<(MeanField, Vec<f64>)> {
    opt.validate()?;
    let labels = graph.labels().ok_or_else(|| Error::Usage("mean-field training needs node labels".into()))?;
    let labeled: Vec<usize> = (0..graph.num_nodes()).filter(|&i| labels[i].is_some()).collect();
    if labeled.is_empty() {
        return Err(Error::Usage("mean-field training needs at least one labeled node".into()));
    }
    let classes = graph.num_classes();
    let targets: Vec<usize> = labeled.iter().map(|&i| labels[i].expect("filtered")).collect();
    let one_hot = one_hot_relax(&targets, classes)?;
    let labeled: Arc<[usize]> = labeled.into();
    let input = NodeInput::new(graph, config.backbone);
    let mut model = MeanField::new(config, graph.node_attrs().cols(), classes, rng)?;
    let adam = opt.adam();
    let scale = -1.0 / labeled.len() as f64;
    let mut losses = Vec::with_capacity(opt.steps);
    for _ in 0..opt.steps {
        let mut drop_rng = (config.dropout > 0.0).then(|| rng.split());
        let mut tape = Tape::new();
        let bound = model.params().bind(&mut tape);
        let logits = model.logits(&mut tape, &bound, &input, drop_rng.as_mut())?;
        let logp = tape.log_softmax_rows(logits)?;
        let picked = tape.gather_rows(logp, &labeled)?;
        let target = tape.constant(one_hot.clone());
        let ll = tape.mul(picked, target)?;
        let ll = tape.sum(ll)?;
        let loss = tape.scale(ll, scale)?;
        losses.push(tape.value(loss).item()?);
        let grads = tape.backward(loss)?;
        let grads = model.params().collect_grads(&grads, &bound);
        adam.step(model.params_mut(), &grads)?;
    }
    Ok((model, losses))
}

/// Fills an empty buffer with `draws` completions (at most its capacity
/// are kept), each an independent one-hot categorical draw per unlabeled
/// node from the mean-field probabilities.
pub fn init_buffer(
    buffer: &mut Buffer,
    model: &MeanField,
    input: &NodeInput,
    label_mask: &[bool],
    draws: usize,
    rng: &mut SeededRng,
) -> Result<()> {
    if !buffer.is_empty() {
        return Err(Error::Usage("buffer initialization expects an empty buffer".into()));
    }
    let probs = meanfield_forward(model, input)?;
    if label_mask.len() != probs.rows() {
        return Err(Error::shape("init_buffer", format!("mask of {} for {} nodes", label_mask.len(), probs.rows())));
    }
    let unlabeled: Vec<usize> = (0..probs.rows()).filter(|&i| !label_mask[i]).collect();
    let classes = probs.cols();
    for _ in 0..draws {
        let mut y = Tensor::zeros(unlabeled.len(), classes);
        for (r, &i) in unlabeled.iter().enumerate() {
            y.set(r, rng.categorical(probs.row(i)), 1.0);
        }
        buffer.push(y);
    }
    Ok(())
}
