use serde::{Deserialize, Serialize};

use crate::diffusion::{deterministic_infer, NoiseSchedule};
use crate::em::{init_buffer, manifold_constrained_sample, train_meanfield, Buffer};
use crate::gnn::{meanfield_forward, DenoiserConfig, MeanField, NodeDenoiser, NodeInput};
use crate::graph::{discretize, Graph};
use crate::rng::SeededRng;
use crate::train::{train_step, OptimizerConfig};
use crate::{Error, Result, Tensor};

/// Loop sizes of semi-supervised training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmConfig {
    /// Completions drawn per expectation phase (N1).
    #[serde(default = "d_expectation")]
    pub expectation_steps: usize,
    /// Denoiser updates per maximization phase (N2).
    #[serde(default = "d_maximization")]
    pub maximization_steps: usize,
    /// Denoiser updates on the mean-field buffer before the first round.
    #[serde(default = "d_initial")]
    pub initial_maximization_steps: usize,
    /// Sampling temperature used when refilling the buffer.
    #[serde(default = "d_temperature")]
    pub buffer_temperature: f64,
    /// Buffer capacity K.
    #[serde(default = "d_capacity")]
    pub buffer_capacity: usize,
    #[serde(default = "d_rounds")]
    pub rounds: usize,
    /// Cross-entropy steps of the mean-field classifier.
    #[serde(default = "d_meanfield")]
    pub meanfield_steps: usize,
}

fn d_expectation() -> usize {
    2
}
fn d_maximization() -> usize {
    100
}
fn d_initial() -> usize {
    300
}
fn d_temperature() -> f64 {
    0.1
}
fn d_capacity() -> usize {
    10
}
fn d_rounds() -> usize {
    3
}
fn d_meanfield() -> usize {
    200
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            expectation_steps: d_expectation(),
            maximization_steps: d_maximization(),
            initial_maximization_steps: d_initial(),
            buffer_temperature: d_temperature(),
            buffer_capacity: d_capacity(),
            rounds: d_rounds(),
            meanfield_steps: d_meanfield(),
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("expectation_steps", self.expectation_steps),
            ("maximization_steps", self.maximization_steps),
            ("initial_maximization_steps", self.initial_maximization_steps),
            ("buffer_capacity", self.buffer_capacity),
            ("meanfield_steps", self.meanfield_steps),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Usage(format!("em.{name} must be at least 1")));
            }
        }
        if !(self.buffer_temperature >= 0.0 && self.buffer_temperature.is_finite()) {
            return Err(Error::Usage(format!(
                "em.buffer_temperature must be non-negative, got {}",
                self.buffer_temperature
            )));
        }
        Ok(())
    }
}

/// Summary of one expectation + maximization round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundStats {
    pub round: usize,
    pub buffer_len: usize,
    pub evicted: usize,
    pub mean_loss: f64,
}

/// Labeled/unlabeled bookkeeping derived from the graph.
struct Split {
    input: NodeInput,
    mask: Vec<bool>,
    labeled: Vec<usize>,
    unlabeled: Vec<usize>,
    y_l: Tensor,
}

impl Split {
    fn new(graph: &Graph, config: &DenoiserConfig) -> Result<Self> {
        let mask = graph.label_mask();
        let labeled: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        let unlabeled: Vec<usize> = (0..mask.len()).filter(|&i| !mask[i]).collect();
        if labeled.is_empty() || unlabeled.is_empty() {
            return Err(Error::Usage("semi-supervised training needs labeled and unlabeled nodes".into()));
        }
        let y_l = graph.node_targets()?.gather_rows(&labeled)?;
        Ok(Self { input: NodeInput::new(graph, config.backbone), mask, labeled, unlabeled, y_l })
    }

    fn complete(&self, y_u: &Tensor) -> Result<Tensor> {
        let mut y = Tensor::zeros(self.mask.len(), self.y_l.cols());
        y.scatter_rows(&self.labeled, &self.y_l)?;
        y.scatter_rows(&self.unlabeled, y_u)?;
        Ok(y)
    }
}

/// Everything a semi-supervised run carries between rounds. Restoring it
/// and continuing gives the same result as an uninterrupted run.
#[derive(Clone, Debug, PartialEq)]
pub struct EmState {
    pub denoiser: NodeDenoiser,
    pub meanfield: MeanField,
    pub buffer: Buffer,
    pub rng: SeededRng,
    pub rounds_done: usize,
    pub losses: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn maximize(
    denoiser: &mut NodeDenoiser,
    buffer: &Buffer,
    split: &Split,
    schedule: &NoiseSchedule,
    opt: &OptimizerConfig,
    unweighted: bool,
    steps: usize,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    let adam = opt.adam();
    let dropout = denoiser.config().dropout > 0.0;
    let mut losses = Vec::with_capacity(steps);
    for _ in 0..steps {
        let y = split.complete(buffer.sample(rng)?)?;
        losses.push(train_step(denoiser, &split.input, &y, None, schedule, &adam, unweighted, dropout, rng)?);
    }
    Ok(losses)
}

impl EmState {
    /// Mean-field pre-training, buffer initialization with `K` draws, and
    /// the initial maximization phase.
    pub fn initialize(
        graph: &Graph,
        config: &DenoiserConfig,
        em: &EmConfig,
        opt: &OptimizerConfig,
        schedule: &NoiseSchedule,
        unweighted: bool,
        mut rng: SeededRng,
    ) -> Result<Self> {
        em.validate()?;
        opt.validate()?;
        let split = Split::new(graph, config)?;
        let mf_opt = OptimizerConfig { steps: em.meanfield_steps, ..opt.clone() };
        let (meanfield, _) = train_meanfield(graph, config, &mf_opt, &mut rng)?;
        let mut buffer = Buffer::new(em.buffer_capacity)?;
        init_buffer(&mut buffer, &meanfield, &split.input, &split.mask, em.buffer_capacity, &mut rng)?;
        let mut denoiser = NodeDenoiser::new(config, graph.node_attrs().cols(), graph.num_classes(), &mut rng)?;
        let losses = maximize(
            &mut denoiser,
            &buffer,
            &split,
            schedule,
            opt,
            unweighted,
            em.initial_maximization_steps,
            &mut rng,
        )?;
        Ok(Self { denoiser, meanfield, buffer, rng, rounds_done: 0, losses })
    }

    /// `N1` conditional samples pushed to the buffer, then `N2` updates on
    /// completions drawn uniformly from it.
    pub fn round(
        &mut self,
        graph: &Graph,
        em: &EmConfig,
        opt: &OptimizerConfig,
        schedule: &NoiseSchedule,
        unweighted: bool,
    ) -> Result<RoundStats> {
        em.validate()?;
        let split = Split::new(graph, self.denoiser.config())?;
        let mut evicted = 0;
        for _ in 0..em.expectation_steps {
            let y_u = manifold_constrained_sample(
                &self.denoiser,
                &split.input,
                schedule,
                &split.y_l,
                &split.mask,
                em.buffer_temperature,
                &mut self.rng,
            )?;
            evicted += usize::from(self.buffer.push(y_u).is_some());
        }
        let losses = maximize(
            &mut self.denoiser,
            &self.buffer,
            &split,
            schedule,
            opt,
            unweighted,
            em.maximization_steps,
            &mut self.rng,
        )?;
        let mean_loss = losses.iter().sum::<f64>() / losses.len() as f64;
        self.losses.extend(losses);
        self.rounds_done += 1;
        Ok(RoundStats { round: self.rounds_done, buffer_len: self.buffer.len(), evicted, mean_loss })
    }

    /// Unlabeled-node predictions of the denoiser conditioned on the known
    /// labels (zero-temperature conditional sampling), in node order of the
    /// unlabeled set.
    pub fn predict_conditional(&self, graph: &Graph, schedule: &NoiseSchedule) -> Result<Vec<usize>> {
        let split = Split::new(graph, self.denoiser.config())?;
        let mut rng = SeededRng::new(0);
        let y_u = manifold_constrained_sample(
            &self.denoiser,
            &split.input,
            schedule,
            &split.y_l,
            &split.mask,
            0.0,
            &mut rng,
        )?;
        Ok(discretize(&y_u))
    }

    /// Per-node predictions of the denoiser's deterministic reverse chain.
    pub fn predict(&self, graph: &Graph, schedule: &NoiseSchedule) -> Result<Vec<usize>> {
        let input = NodeInput::new(graph, self.denoiser.config().backbone);
        Ok(discretize(&deterministic_infer(&self.denoiser, &input, schedule)?))
    }

    /// Per-node argmax of the mean-field classifier.
    pub fn predict_meanfield(&self, graph: &Graph) -> Result<Vec<usize>> {
        let input = NodeInput::new(graph, self.denoiser.config().backbone);
        Ok(discretize(&meanfield_forward(&self.meanfield, &input)?))
    }
}

/// Full semi-supervised run: initialization followed by `em.rounds` rounds.
/// `on_round` sees the state after every round.
#[allow(clippy::too_many_arguments)]
pub fn em_train(
    graph: &Graph,
    config: &DenoiserConfig,
    em: &EmConfig,
    opt: &OptimizerConfig,
    schedule: &NoiseSchedule,
    unweighted: bool,
    rng: SeededRng,
    mut on_round: impl FnMut(&EmState, &RoundStats) -> Result<()>,
) -> Result<EmState> {
    let mut state = EmState::initialize(graph, config, em, opt, schedule, unweighted, rng)?;
    while state.rounds_done < em.rounds {
        let stats = state.round(graph, em, opt, schedule, unweighted)?;
        on_round(&state, &stats)?;
    }
    Ok(state)
}
