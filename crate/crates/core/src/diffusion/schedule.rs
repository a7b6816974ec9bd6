use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest admissible per-step variance.
pub const MAX_BETA: f64 = 0.999;

/// Serializable description of a cosine schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub steps: usize,
    #[serde(default = "default_offset")]
    pub offset: f64,
}

fn default_offset() -> f64 {
    0.008
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self { steps: 100, offset: default_offset() }
    }
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::cosine(self.steps, self.offset)
    }
}

/// The scalars one reverse or forward step at `t` depends on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepCoeffs {
    pub beta: f64,
    pub alpha: f64,
    pub alpha_bar: f64,
    pub alpha_bar_prev: f64,
}

impl StepCoeffs {
    /// Coefficients with `α = 1 − β` and `ᾱ_{t−1} = ᾱ_t / α`.
    pub fn new(beta: f64, alpha_bar: f64) -> Self {
        let alpha = 1.0 - beta;
        Self { beta, alpha, alpha_bar, alpha_bar_prev: alpha_bar / alpha }
    }

    pub fn sigma(&self) -> f64 {
        self.beta.sqrt()
    }

    /// `β / (2 α (1 − ᾱ))`, the per-step weight of the residual loss when
    /// `σ² = β`.
    pub fn loss_weight(&self) -> f64 {
        self.beta / (2.0 * self.alpha * (1.0 - self.alpha_bar))
    }
}

/// Per-step variances for `t = 1..=T` under the cosine schedule.
///
/// `β_t = min(1 − f(t)/f(t−1), 0.999)` with
/// `f(t) = cos²(((t/T + s)/(1 + s))·π/2)`, and `ᾱ_t` is the running product
/// of `1 − β`, so the clip keeps `ᾱ_T` strictly positive.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    spec: ScheduleSpec,
    beta: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn cosine(steps: usize, offset: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("diffusion steps must be at least 1".into()));
        }
        if !(offset > 0.0 && offset.is_finite()) {
            return Err(Error::Config(format!("schedule offset must be positive, got {offset}")));
        }
        let f = |t: usize| {
            let u = (t as f64 / steps as f64 + offset) / (1.0 + offset);
            (u * FRAC_PI_2).cos().powi(2)
        };
        let f0 = f(0);
        let raw = |t: usize| f(t) / f0;
        let mut beta = Vec::with_capacity(steps);
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(1.0);
        let mut prev = 1.0;
        for t in 1..=steps {
            let ratio = raw(t) / raw(t - 1);
            let b = (1.0 - ratio).min(MAX_BETA);
            prev *= 1.0 - b;
            beta.push(b);
            alpha_bar.push(prev);
        }
        Ok(Self { spec: ScheduleSpec { steps, offset }, beta, alpha_bar })
    }

    pub fn spec(&self) -> ScheduleSpec {
        self.spec
    }

    /// Number of diffusion steps `T`.
    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    fn check(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::Usage(format!("diffusion step {t} outside 1..={}", self.steps())));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.beta[t - 1]
    }

    /// `ᾱ_t` for `t = 0..=T` with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn sigma2(&self, t: usize) -> f64 {
        self.beta(t)
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.beta(t).sqrt()
    }

    pub fn coeffs(&self, t: usize) -> Result<StepCoeffs> {
        self.check(t)?;
        Ok(StepCoeffs {
            beta: self.beta(t),
            alpha: self.alpha(t),
            alpha_bar: self.alpha_bar[t],
            alpha_bar_prev: self.alpha_bar[t - 1],
        })
    }
}
