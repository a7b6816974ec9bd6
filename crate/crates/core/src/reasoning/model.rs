use crate::diffusion::{reverse_chain, NoiseSchedule};
use crate::gnn::{DenoiserConfig, EdgeDenoiser, EdgeInput, TargetLayout};
use crate::graph::{Graph, PRESENT_COLUMN};
use crate::reasoning::Standardizer;
use crate::rng::SeededRng;
use crate::train::{train_denoiser, OptimizerConfig, TrainItem};
use crate::{Error, Result, Tensor};

/// Anything that predicts one value per pair row of a reasoning instance.
pub trait PairPredictor {
    /// Predictions for every graph, in the targets' original scale.
    fn predict(&self, graphs: &[&Graph], rng: &mut SeededRng) -> Result<Vec<Tensor>>;
}

/// Predicts the same value for every pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantPredictor {
    pub value: f64,
}

impl ConstantPredictor {
    /// The mean pair target of `graphs`.
    pub fn mean_of(graphs: &[Graph]) -> Result<Self> {
        Ok(Self { value: Standardizer::fit(graphs)?.mean })
    }
}

impl PairPredictor for ConstantPredictor {
    fn predict(&self, graphs: &[&Graph], _rng: &mut SeededRng) -> Result<Vec<Tensor>> {
        Ok(graphs.iter().map(|g| Tensor::filled(g.num_edges(), 1, self.value)).collect())
    }
}

/// Edge denoiser on standardized targets plus its reverse chain.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionReasoner {
    pub denoiser: EdgeDenoiser,
    pub schedule: NoiseSchedule,
    pub standardizer: Standardizer,
    pub lambda: f64,
}

const EVAL_BATCH: usize = 64;

impl PairPredictor for DiffusionReasoner {
    fn predict(&self, graphs: &[&Graph], rng: &mut SeededRng) -> Result<Vec<Tensor>> {
        let mut out = Vec::with_capacity(graphs.len());
        for chunk in graphs.chunks(EVAL_BATCH) {
            let input = EdgeInput::batch(chunk, Some(PRESENT_COLUMN), self.denoiser.config().edge_aggregation)?;
            let rng = (self.lambda > 0.0).then_some(&mut *rng);
            let y = reverse_chain(&self.denoiser, &input, &self.schedule, self.lambda, rng, |_, _| Ok(()))?;
            for range in input.group_rows() {
                out.push(self.standardizer.inverse(&y.slice_rows(range.start, range.end)));
            }
        }
        Ok(out)
    }
}

/// Fits an edge denoiser to the pair targets of `train`, standardized with
/// the statistics of `train`.
#[allow(clippy::too_many_arguments)]
pub fn train_reasoner(
    train: &[Graph],
    config: &DenoiserConfig,
    schedule: &NoiseSchedule,
    opt: &OptimizerConfig,
    unweighted: bool,
    rng: &mut SeededRng,
    log: impl FnMut(usize, f64),
) -> Result<DiffusionReasoner> {
    opt.validate()?;
    let standardizer = Standardizer::fit(train)?;
    let edge_dim = train
        .first()
        .and_then(|g| g.edge_attrs())
        .map(Tensor::cols)
        .ok_or_else(|| Error::Usage("reasoning training needs graphs with edge attributes".into()))?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    rng.shuffle(&mut order);
    let mut items = Vec::new();
    for chunk in order.chunks(opt.batch_graphs) {
        let graphs: Vec<&Graph> = chunk.iter().map(|&i| &train[i]).collect();
        let targets: Vec<Tensor> = graphs
            .iter()
            .map(|g| {
                g.edge_targets()
                    .map(|t| standardizer.forward(t))
                    .ok_or_else(|| Error::Usage("graph has no pair targets".into()))
            })
            .collect::<Result<_>>()?;
        let parts: Vec<&Tensor> = targets.iter().collect();
        items.push(TrainItem {
            input: EdgeInput::batch(&graphs, Some(PRESENT_COLUMN), config.edge_aggregation)?,
            target: Tensor::concat_rows(&parts, 1)?,
            mask: None,
        });
    }
    let mut denoiser = EdgeDenoiser::new(config, edge_dim, 1, rng)?;
    train_denoiser(&mut denoiser, &items, schedule, opt, unweighted, config.dropout > 0.0, rng, log)?;
    Ok(DiffusionReasoner { denoiser, schedule: schedule.clone(), standardizer, lambda: 0.0 })
}

/// Element-wise mean squared error of `model` over every pair target of
/// `graphs`.
pub fn eval_reasoning(model: &dyn PairPredictor, graphs: &[Graph], rng: &mut SeededRng) -> Result<f64> {
    let refs: Vec<&Graph> = graphs.iter().collect();
    let preds = model.predict(&refs, rng)?;
    let (mut sse, mut count) = (0.0, 0usize);
    for (g, p) in graphs.iter().zip(&preds) {
        let t = g.edge_targets().ok_or_else(|| Error::Usage("graph has no pair targets".into()))?;
        if p.shape() != t.shape() {
            return Err(Error::shape("eval_reasoning", format!("{:?} vs {:?}", p.shape(), t.shape())));
        }
        sse += p.data().iter().zip(t.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        count += t.len();
    }
    if count == 0 {
        return Err(Error::Usage("no pair targets to evaluate".into()));
    }
    Ok(sse / count as f64)
}
