use std::sync::Arc;

use crate::autodiff::{Tape, Var};
use crate::diffusion::{eps_to_mu, NoiseSchedule};
use crate::gnn::{Denoiser, NodeDenoiser, NodeInput};
use crate::rng::SeededRng;
use crate::{Error, Result, Tensor};

/// `‖y_L − P ŷ‖²` on the tape, where
/// `ŷ = (y − ((1 − ᾱ_s)/√(1 − ᾱ_s)) ε_θ(y, s)) / √ᾱ_s` is the clean-target
/// estimate at step `s` and `P` selects the `labeled` rows.
#[allow(clippy::too_many_arguments)]
pub fn manifold_residual(
    tape: &mut Tape,
    params: &[Var],
    denoiser: &NodeDenoiser,
    input: &NodeInput,
    schedule: &NoiseSchedule,
    y: Var,
    y_l: &Tensor,
    labeled: &Arc<[usize]>,
    step: usize,
) -> Result<Var> {
    Ok(residual_parts(tape, params, denoiser, input, schedule, y, y_l, labeled, step)?.0)
}

#[allow(clippy::too_many_arguments)]
fn residual_parts(
    tape: &mut Tape,
    params: &[Var],
    denoiser: &NodeDenoiser,
    input: &NodeInput,
    schedule: &NoiseSchedule,
    y: Var,
    y_l: &Tensor,
    labeled: &Arc<[usize]>,
    step: usize,
) -> Result<(Var, Var)> {
    let c = schedule.coeffs(step)?;
    let eps = denoiser.forward(tape, params, input, y, &[step], None)?;
    let scaled = tape.scale(eps, (1.0 - c.alpha_bar) / (1.0 - c.alpha_bar).sqrt())?;
    let diff = tape.sub(y, scaled)?;
    let y_hat = tape.scale(diff, 1.0 / c.alpha_bar.sqrt())?;
    let picked = tape.gather_rows(y_hat, labeled)?;
    let target = tape.constant(y_l.clone());
    Ok((tape.squared_error(target, picked)?, eps))
}

/// Value of [`manifold_residual`], its gradient with respect to `y` (the
/// parameters are held fixed), and `ε_θ(y, s)` from the same forward pass.
pub fn manifold_residual_grad(
    denoiser: &NodeDenoiser,
    input: &NodeInput,
    schedule: &NoiseSchedule,
    y: &Tensor,
    y_l: &Tensor,
    labeled: &Arc<[usize]>,
    step: usize,
) -> Result<(f64, Tensor, Tensor)> {
    let mut tape = Tape::new();
    let params = denoiser.params().bind_frozen(&mut tape);
    let y_var = tape.leaf(y.clone());
    let (loss, eps) = residual_parts(&mut tape, &params, denoiser, input, schedule, y_var, y_l, labeled, step)?;
    let value = tape.value(loss).item()?;
    let eps_value = tape.value(eps).clone();
    let grads = tape.backward(loss)?;
    let grad = grads.get(y_var).cloned().unwrap_or_else(|| Tensor::zeros(y.rows(), y.cols()));
    Ok((value, grad, eps_value))
}

/// Conditional completion of the unlabeled rows given labeled targets `y_l`
/// (one row per `true` entry of `label_mask`, in node order).
///
/// Starting from `y⁽ᵀ⁾ ~ N(0, λ²I)`, every step `s = t + 1` from `T` to `1`
///
/// 1. takes a reverse step `y' = μ_θ(y⁽ˢ⁾) + σ_s z`, `z ~ N(0, λ²I)`;
/// 2. moves the unlabeled rows against `γ ∇_{y⁽ˢ⁾} ‖y_L − P ŷ‖²` with
///    `γ = 1/‖y_L − P ŷ‖²` (skipped when the residual is exactly zero);
/// 3. resets the labeled rows to `√ᾱ_t y_L + √(1 − ᾱ_t) z'`,
///    `z' ~ N(0, λ²I)`.
///
/// Returns the unlabeled rows of `y⁽⁰⁾`.
#[allow(clippy::too_many_arguments)]
pub fn manifold_constrained_sample(
    denoiser: &NodeDenoiser,
    input: &NodeInput,
    schedule: &NoiseSchedule,
    y_l: &Tensor,
    label_mask: &[bool],
    lambda: f64,
    rng: &mut SeededRng,
) -> Result<Tensor> {
    manifold_sample_traced(denoiser, input, schedule, y_l, label_mask, lambda, rng, |_, _| Ok(()))
}

/// [`manifold_constrained_sample`] with `observe(t, y⁽ᵗ⁾)` called on the full
/// state after every step.
#[allow(clippy::too_many_arguments)]
pub fn manifold_sample_traced(
    denoiser: &NodeDenoiser,
    input: &NodeInput,
    schedule: &NoiseSchedule,
    y_l: &Tensor,
    label_mask: &[bool],
    lambda: f64,
    rng: &mut SeededRng,
    mut observe: impl FnMut(usize, &Tensor) -> Result<()>,
) -> Result<Tensor> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Usage(format!("temperature must be a finite non-negative number, got {lambda}")));
    }
    let n = input.num_nodes();
    let cols = denoiser.num_classes();
    if label_mask.len() != n {
        return Err(Error::shape("manifold_sample", format!("mask of {} for {n} nodes", label_mask.len())));
    }
    let labeled: Arc<[usize]> = (0..n).filter(|&i| label_mask[i]).collect();
    let unlabeled: Arc<[usize]> = (0..n).filter(|&i| !label_mask[i]).collect();
    if labeled.is_empty() || unlabeled.is_empty() {
        return Err(Error::Usage("conditional sampling needs both labeled and unlabeled nodes".into()));
    }
    if y_l.shape() != (labeled.len(), cols) {
        return Err(Error::shape(
            "manifold_sample",
            format!("labeled targets {:?}, expected ({}, {cols})", y_l.shape(), labeled.len()),
        ));
    }
    let gauss = |rng: &mut SeededRng, rows: usize, scale: f64| {
        if scale == 0.0 {
            Tensor::zeros(rows, cols)
        } else {
            rng.normal_tensor(rows, cols).scale(scale)
        }
    };
    let mut y = gauss(rng, n, lambda);
    for t in (0..schedule.steps()).rev() {
        let s = t + 1;
        let c = schedule.coeffs(s)?;
        let (residual, grad, eps_hat) = manifold_residual_grad(denoiser, input, schedule, &y, y_l, &labeled, s)?;
        let mut next = eps_to_mu(&y, &eps_hat, s, schedule)?;
        if lambda != 0.0 {
            next = next.add(&gauss(rng, n, lambda * c.sigma()))?;
        }
        if residual > 0.0 {
            let gamma = 1.0 / residual;
            for &i in unlabeled.iter() {
                let g = grad.row(i).to_vec();
                for (v, gv) in next.row_mut(i).iter_mut().zip(g) {
                    *v -= gamma * gv;
                }
            }
        }
        let ab = schedule.alpha_bar(t);
        let noise = gauss(rng, labeled.len(), lambda);
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        for (r, &i) in labeled.iter().enumerate() {
            for (col, v) in next.row_mut(i).iter_mut().enumerate() {
                *v = a * y_l.get(r, col) + b * noise.get(r, col);
            }
        }
        if !next.is_finite() {
            return Err(Error::Numeric(format!("conditional sampling diverged at step {s}")));
        }
        observe(t, &next)?;
        y = next;
    }
    y.gather_rows(&unlabeled)
}
