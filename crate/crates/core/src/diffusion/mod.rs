//! Gaussian diffusion over relaxed targets: variance schedule, forward
//! noising, the residual-matching loss and reverse-chain inference.

mod infer;
mod loss;
mod process;
mod schedule;

pub use crate::graph::discretize;
pub use infer::{aggregate_samples, deterministic_infer, reverse_chain, stochastic_infer, InferenceMode};
pub use loss::{training_loss, training_loss_at};
pub use process::{eps_to_mu, forward_sample, posterior_mean, reverse_step};
pub use schedule::{NoiseSchedule, ScheduleSpec, StepCoeffs};
