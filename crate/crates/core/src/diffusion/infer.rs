use serde::{Deserialize, Serialize};

use crate::diffusion::process::{add_noise, check_finite, eps_to_mu_with};
use crate::diffusion::NoiseSchedule;
use crate::gnn::{Denoiser, TargetLayout};
use crate::graph::discretize;
use crate::rng::SeededRng;
use crate::{Error, Result, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InferenceMode {
    #[default]
    Deterministic,
    Stochastic,
}

/// Runs the reverse chain from `t = T` to `0` at temperature `lambda`.
///
/// `y⁽ᵀ⁾ ~ N(0, λ²I)`, which is exactly zero at `λ = 0`; each step adds
/// `λ σ_t z`. `observe(t, y⁽ᵗ⁾)` sees every state after `y⁽ᵀ⁾`, in order
/// `T−1, …, 0`. An rng is required only when `lambda > 0`.
pub fn reverse_chain<D: Denoiser>(
    denoiser: &D,
    input: &D::Input,
    schedule: &NoiseSchedule,
    lambda: f64,
    mut rng: Option<&mut SeededRng>,
    mut observe: impl FnMut(usize, &Tensor) -> Result<()>,
) -> Result<Tensor> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Usage(format!("temperature must be a finite non-negative number, got {lambda}")));
    }
    if lambda > 0.0 && rng.is_none() {
        return Err(Error::Usage("stochastic inference needs a random stream".into()));
    }
    let rows = input.target_rows();
    let cols = denoiser.target_cols();
    let mut y = Tensor::zeros(rows, cols);
    if let (true, Some(r)) = (lambda > 0.0, rng.as_deref_mut()) {
        add_noise(&mut y, lambda, r);
    }
    for t in (1..=schedule.steps()).rev() {
        let c = schedule.coeffs(t)?;
        let eps_hat = denoiser.predict(input, &y, t)?;
        y = eps_to_mu_with(&y, &eps_hat, &c)?;
        if let (true, Some(r)) = (lambda > 0.0, rng.as_deref_mut()) {
            add_noise(&mut y, lambda * c.sigma(), r);
        }
        check_finite(&y, t)?;
        observe(t - 1, &y)?;
    }
    Ok(y)
}

/// Zero start, mean of every reverse step.
pub fn deterministic_infer<D: Denoiser>(denoiser: &D, input: &D::Input, schedule: &NoiseSchedule) -> Result<Tensor> {
    reverse_chain(denoiser, input, schedule, 0.0, None, |_, _| Ok(()))
}

/// Ancestral sampling at temperature `lambda`.
pub fn stochastic_infer<D: Denoiser>(
    denoiser: &D,
    input: &D::Input,
    schedule: &NoiseSchedule,
    lambda: f64,
    rng: &mut SeededRng,
) -> Result<Tensor> {
    reverse_chain(denoiser, input, schedule, lambda, Some(rng), |_, _| Ok(()))
}

/// Per-row majority vote over discretized samples; ties go to the lowest
/// class index.
pub fn aggregate_samples(samples: &[Tensor]) -> Result<Vec<usize>> {
    let Some(first) = samples.first() else {
        return Err(Error::Usage("cannot aggregate an empty sample list".into()));
    };
    let (rows, cols) = first.shape();
    let mut counts = vec![0usize; rows * cols];
    for s in samples {
        if s.shape() != (rows, cols) {
            return Err(Error::shape("aggregate_samples", format!("{:?} vs {:?}", s.shape(), (rows, cols))));
        }
        for (r, c) in discretize(s).into_iter().enumerate() {
            counts[r * cols + c] += 1;
        }
    }
    Ok(counts
        .chunks(cols.max(1))
        .map(|row| {
            let mut best = 0;
            for (c, &n) in row.iter().enumerate() {
                if n > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect())
}
