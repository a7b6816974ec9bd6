//! Supervised fitting of a denoiser with the residual-matching loss.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, Tape};
use crate::diffusion::{training_loss, NoiseSchedule};
use crate::gnn::Denoiser;
use crate::rng::SeededRng;
use crate::{Error, Result, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default = "default_rate")]
    pub rate: f64,
    #[serde(default)]
    pub decay: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Graphs per training batch.
    #[serde(default = "default_batch")]
    pub batch_graphs: usize,
}

fn default_rate() -> f64 {
    1e-3
}

fn default_steps() -> usize {
    500
}

fn default_batch() -> usize {
    32
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { rate: default_rate(), decay: 0.0, steps: default_steps(), batch_graphs: default_batch() }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.rate)));
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return Err(Error::Config(format!("weight decay must be non-negative, got {}", self.decay)));
        }
        if self.batch_graphs == 0 {
            return Err(Error::Config("batch_graphs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> Adam {
        Adam::new(self.rate, self.decay)
    }
}

/// A (possibly batched) training input with its clean relaxed targets.
#[derive(Clone, Debug)]
pub struct TrainItem<I> {
    pub input: I,
    pub target: Tensor,
    /// Rows that count towards the loss; `None` counts all.
    pub mask: Option<Vec<bool>>,
}

/// One optimizer step on `input` with clean targets `target`. Returns the
/// loss before the update.
#[allow(clippy::too_many_arguments)]
pub fn train_step<D: Denoiser>(
    denoiser: &mut D,
    input: &D::Input,
    target: &Tensor,
    mask: Option<&[bool]>,
    schedule: &NoiseSchedule,
    adam: &Adam,
    unweighted: bool,
    dropout: bool,
    rng: &mut SeededRng,
) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = denoiser.params().bind(&mut tape);
    let loss = training_loss(&mut tape, &bound, denoiser, input, target, mask, schedule, unweighted, rng, dropout)?;
    let value = tape.value(loss).item()?;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("training loss became {value}")));
    }
    let grads = tape.backward(loss)?;
    let grads = denoiser.params().collect_grads(&grads, &bound);
    adam.step(denoiser.params_mut(), &grads)?;
    Ok(value)
}

/// Runs `opt.steps` updates, each on an item drawn uniformly from `items`.
/// `log(step, loss)` sees every loss. Returns all losses.
#[allow(clippy::too_many_arguments)]
pub fn train_denoiser<D: Denoiser>(
    denoiser: &mut D,
    items: &[TrainItem<D::Input>],
    schedule: &NoiseSchedule,
    opt: &OptimizerConfig,
    unweighted: bool,
    dropout: bool,
    rng: &mut SeededRng,
    mut log: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    opt.validate()?;
    if items.is_empty() {
        return Err(Error::Usage("no training data".into()));
    }
    let adam = opt.adam();
    let mut losses = Vec::with_capacity(opt.steps);
    for step in 0..opt.steps {
        let item = &items[if items.len() == 1 { 0 } else { rng.below(items.len()) }];
        let loss = train_step(
            denoiser,
            &item.input,
            &item.target,
            item.mask.as_deref(),
            schedule,
            &adam,
            unweighted,
            dropout,
            rng,
        )?;
        log(step, loss);
        losses.push(loss);
    }
    Ok(losses)
}
