//! Semi-supervised training on one partially labeled graph: a mean-field
//! classifier seeds a FIFO buffer of label completions, and variational EM
//! alternates between drawing completions with manifold-constrained sampling
//! and fitting the denoiser on labeled ∪ sampled targets.

mod buffer;
mod driver;
mod manifold;
mod meanfield;

pub use buffer::Buffer;
pub use driver::{em_train, EmConfig, EmState, RoundStats};
pub use manifold::{manifold_constrained_sample, manifold_residual, manifold_residual_grad, manifold_sample_traced};
pub use meanfield::{init_buffer, train_meanfield};
