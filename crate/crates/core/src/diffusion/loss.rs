use std::sync::Arc;

use crate::autodiff::{Tape, Var};
use crate::diffusion::process::forward_with;
use crate::diffusion::NoiseSchedule;
use crate::gnn::{Denoiser, TargetLayout};
use crate::rng::SeededRng;
use crate::{Error, Result, Tensor};

/// Residual-matching loss with one step `t ~ U{1..T}` per graph of the
/// input and fresh `ε ~ N(0, I)`.
///
/// See [`training_loss_at`] for the reduction. Dropout, when enabled, draws
/// from a stream split off `rng`.
#[allow(clippy::too_many_arguments)]
pub fn training_loss<D: Denoiser>(
    tape: &mut Tape,
    params: &[Var],
    denoiser: &D,
    input: &D::Input,
    y0: &Tensor,
    mask: Option<&[bool]>,
    schedule: &NoiseSchedule,
    unweighted: bool,
    rng: &mut SeededRng,
    dropout: bool,
) -> Result<Var> {
    let steps: Vec<usize> = (0..input.num_groups()).map(|_| 1 + rng.below(schedule.steps())).collect();
    let eps = rng.normal_tensor(y0.rows(), y0.cols());
    let mut drop_rng = dropout.then(|| rng.split());
    training_loss_at(tape, params, denoiser, input, y0, mask, schedule, unweighted, &steps, &eps, drop_rng.as_mut())
}

/// Loss for given steps and noise:
/// `Σ_g w_{t_g} · SSE_g / N`, where `SSE_g` is the squared residual error
/// over the counted rows of graph `g` and `N` the number of counted target
/// entries in the batch. `w = 1` when `unweighted`, else
/// `β/(2α(1 − ᾱ))`. With a mask only the flagged rows count.
#[allow(clippy::too_many_arguments)]
pub fn training_loss_at<D: Denoiser>(
    tape: &mut Tape,
    params: &[Var],
    denoiser: &D,
    input: &D::Input,
    y0: &Tensor,
    mask: Option<&[bool]>,
    schedule: &NoiseSchedule,
    unweighted: bool,
    steps: &[usize],
    eps: &Tensor,
    dropout: Option<&mut SeededRng>,
) -> Result<Var> {
    let rows = input.target_rows();
    let cols = denoiser.target_cols();
    if y0.shape() != (rows, cols) || eps.shape() != (rows, cols) {
        return Err(Error::shape(
            "training_loss",
            format!("targets {:?} and noise {:?} must both be ({rows}, {cols})", y0.shape(), eps.shape()),
        ));
    }
    let groups = input.num_groups();
    if steps.len() != groups {
        return Err(Error::shape("training_loss", format!("{} steps for {groups} graphs", steps.len())));
    }
    let row_groups = input.row_groups();
    let mut weights = Vec::with_capacity(groups);
    let mut alpha_bars = Vec::with_capacity(groups);
    for &t in steps {
        let c = schedule.coeffs(t)?;
        weights.push(if unweighted { 1.0 } else { c.loss_weight() });
        alpha_bars.push(c.alpha_bar);
    }

    let mut noisy = Tensor::zeros(rows, cols);
    for (g, range) in input.group_rows().iter().enumerate() {
        let part = forward_with(
            &y0.slice_rows(range.start, range.end),
            &eps.slice_rows(range.start, range.end),
            alpha_bars[g],
        )?;
        noisy.data_mut()[range.start * cols..range.end * cols].copy_from_slice(part.data());
    }

    let y_t = tape.constant(noisy);
    let eps_hat = denoiser.forward(tape, params, input, y_t, steps, dropout)?;
    let (eps_hat, eps, counted_groups) = match mask {
        None => (eps_hat, tape.constant(eps.clone()), row_groups.clone()),
        Some(mask) => {
            if mask.len() != rows {
                return Err(Error::shape("training_loss", format!("mask has {} rows, expected {rows}", mask.len())));
            }
            let keep: Vec<usize> = (0..rows).filter(|&r| mask[r]).collect();
            if keep.is_empty() {
                return Err(Error::Usage("training loss needs at least one labeled row".into()));
            }
            let sel_groups: Arc<[usize]> = keep.iter().map(|&r| row_groups[r]).collect();
            let keep: Arc<[usize]> = keep.into();
            let eps_sel = tape.constant(eps.gather_rows(&keep)?);
            (tape.gather_rows(eps_hat, &keep)?, eps_sel, sel_groups)
        }
    };
    let counted = counted_groups.len() * cols;
    let diff = tape.sub(eps_hat, eps)?;
    let sq = tape.mul(diff, diff)?;
    let per_group = tape.scatter_add_rows(sq, &counted_groups, groups)?;
    let ones = tape.constant(Tensor::filled(cols, 1, 1.0));
    let sse = tape.matmul(per_group, ones)?;
    let mean = tape.scale(sse, 1.0 / counted as f64)?;
    let weighted = tape.scale_rows(mean, &Arc::from(weights))?;
    tape.sum(weighted)
}
