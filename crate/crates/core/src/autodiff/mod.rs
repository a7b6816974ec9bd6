//! Reverse-mode differentiation over dense tensors.
//!
//! A [`Tape`] records each primitive as it is evaluated; [`Tape::backward`]
//! then walks the records in reverse and accumulates gradients. Trainable
//! values live in a [`ParamSet`] and are updated by [`Adam`].

mod gradcheck;
mod optim;
mod tape;

pub use gradcheck::{gradient_check, GradCheckReport};
pub use optim::{glorot_uniform, Adam, ParamId, ParamSet, Parameter};
pub use tape::{Gradients, Tape, Var};
