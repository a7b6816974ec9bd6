use crate::diffusion::{NoiseSchedule, StepCoeffs};
use crate::gnn::Denoiser;
use crate::rng::SeededRng;
use crate::{Error, Result, Tensor};

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// `√ᾱ·y0 + √(1 − ᾱ)·ε` for explicit coefficients.
pub(crate) fn forward_with(y0: &Tensor, eps: &Tensor, alpha_bar: f64) -> Result<Tensor> {
    same_shape("forward_sample", y0, eps)?;
    let (a, b) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    let data = y0.data().iter().zip(eps.data()).map(|(&y, &e)| a * y + b * e).collect();
    Tensor::from_vec(y0.rows(), y0.cols(), data)
}

/// Draws `y⁽ᵗ⁾ ~ q(y⁽ᵗ⁾ | y⁽⁰⁾)` given the standard normal noise `eps`.
pub fn forward_sample(y0: &Tensor, t: usize, eps: &Tensor, schedule: &NoiseSchedule) -> Result<Tensor> {
    forward_with(y0, eps, schedule.coeffs(t)?.alpha_bar)
}

/// Mean of `q(y⁽ᵗ⁻¹⁾ | y⁽ᵗ⁾, y⁽⁰⁾)`.
pub fn posterior_mean(y0: &Tensor, y_t: &Tensor, t: usize, schedule: &NoiseSchedule) -> Result<Tensor> {
    if t == 0 {
        return Err(Error::Usage("posterior mean is undefined at step 0".into()));
    }
    let c = schedule.coeffs(t)?;
    same_shape("posterior_mean", y0, y_t)?;
    let denom = 1.0 - c.alpha_bar;
    let a = c.alpha_bar_prev.sqrt() * c.beta / denom;
    let b = c.alpha.sqrt() * (1.0 - c.alpha_bar_prev) / denom;
    let data = y0.data().iter().zip(y_t.data()).map(|(&y, &x)| a * y + b * x).collect();
    Tensor::from_vec(y0.rows(), y0.cols(), data)
}

/// `(y⁽ᵗ⁾ − β/√(1 − ᾱ)·ε̂)/√α` for explicit coefficients.
pub(crate) fn eps_to_mu_with(y_t: &Tensor, eps_hat: &Tensor, c: &StepCoeffs) -> Result<Tensor> {
    same_shape("eps_to_mu", y_t, eps_hat)?;
    let k = c.beta / (1.0 - c.alpha_bar).sqrt();
    let inv = 1.0 / c.alpha.sqrt();
    let data = y_t.data().iter().zip(eps_hat.data()).map(|(&y, &e)| (y - k * e) * inv).collect();
    Tensor::from_vec(y_t.rows(), y_t.cols(), data)
}

/// Mean of the learned reverse step from its residual estimate.
pub fn eps_to_mu(y_t: &Tensor, eps_hat: &Tensor, t: usize, schedule: &NoiseSchedule) -> Result<Tensor> {
    eps_to_mu_with(y_t, eps_hat, &schedule.coeffs(t)?)
}

/// One reverse step `y⁽ᵗ⁻¹⁾ = μ_θ + λ σ_t z`. At `λ = 0` no noise is drawn
/// and the result is exactly the mean.
pub fn reverse_step<D: Denoiser>(
    denoiser: &D,
    input: &D::Input,
    y_t: &Tensor,
    t: usize,
    schedule: &NoiseSchedule,
    lambda: f64,
    rng: &mut SeededRng,
) -> Result<Tensor> {
    let c = schedule.coeffs(t)?;
    let eps_hat = denoiser.predict(input, y_t, t)?;
    let mut mu = eps_to_mu_with(y_t, &eps_hat, &c)?;
    if lambda != 0.0 {
        add_noise(&mut mu, lambda * c.sigma(), rng);
    }
    check_finite(&mu, t)?;
    Ok(mu)
}

pub(crate) fn add_noise(y: &mut Tensor, scale: f64, rng: &mut SeededRng) {
    for v in y.data_mut() {
        *v += scale * rng.normal();
    }
}

pub(crate) fn check_finite(y: &Tensor, t: usize) -> Result<()> {
    if !y.is_finite() {
        return Err(Error::Numeric(format!("reverse chain diverged at step {t}")));
    }
    Ok(())
}
