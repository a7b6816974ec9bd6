use crate::autodiff::{Gradients, Tape, Var};
use crate::rng::SeededRng;
use crate::{Error, Result, Tensor};

/// A trainable tensor with its adaptive-moment state.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub first_moment: Tensor,
    pub second_moment: Tensor,
    pub step_count: u64,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let (r, c) = value.shape();
        Self {
            name: name.into(),
            value,
            first_moment: Tensor::zeros(r, c),
            second_moment: Tensor::zeros(r, c),
            step_count: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered collection of parameters owned by one network.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Parameter>,
}

/// Glorot-style uniform draw in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(fan_in: usize, fan_out: usize, rng: &mut SeededRng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.uniform_range(-limit, limit)).collect();
    Tensor::from_vec(fan_in, fan_out, data).expect("length matches by construction")
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.params.push(Parameter::new(name, value));
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Records every parameter as a trainable leaf, in storage order.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.leaf(p.value.clone())).collect()
    }

    /// Records every parameter as a constant, for gradient-free passes and
    /// for differentiation with respect to inputs only.
    pub fn bind_frozen(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.constant(p.value.clone())).collect()
    }

    /// Gradients for each parameter in storage order. A parameter the loss
    /// does not reach gets a zero gradient.
    pub fn collect_grads(&self, grads: &Gradients, bound: &[Var]) -> Vec<Tensor> {
        self.params
            .iter()
            .zip(bound)
            .map(|(p, &v)| {
                grads.get(v).cloned().unwrap_or_else(|| {
                    let (r, c) = p.value.shape();
                    Tensor::zeros(r, c)
                })
            })
            .collect()
    }
}

/// Adaptive-moment optimizer with coupled (L2) weight decay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub rate: f64,
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(rate: f64, decay: f64) -> Self {
        Self { rate, decay, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    /// One update of every parameter from `grads` (storage order).
    pub fn step(&self, params: &mut ParamSet, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::shape(
                "adam_step",
                format!("{} gradients for {} parameters", grads.len(), params.len()),
            ));
        }
        for (p, g) in params.params.iter().zip(grads) {
            if p.value.shape() != g.shape() {
                return Err(Error::shape("adam_step", format!("gradient shape mismatch for {}", p.name)));
            }
            if !g.is_finite() {
                return Err(Error::Numeric(format!("non-finite gradient for {}", p.name)));
            }
        }
        for (p, g) in params.params.iter_mut().zip(grads) {
            p.step_count += 1;
            let bias1 = 1.0 - self.beta1.powi(p.step_count as i32);
            let bias2 = 1.0 - self.beta2.powi(p.step_count as i32);
            let value = p.value.data_mut();
            let m = p.first_moment.data_mut();
            let v = p.second_moment.data_mut();
            for i in 0..value.len() {
                let gi = g.data()[i] + self.decay * value[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                value[i] -= self.rate * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }

    /// Binds, evaluates, differentiates and updates in one call. Returns the
    /// loss value.
    pub fn minimize(
        &self,
        params: &mut ParamSet,
        loss_fn: impl FnOnce(&mut Tape, &[Var]) -> Result<Var>,
    ) -> Result<f64> {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let loss = loss_fn(&mut tape, &bound)?;
        let value = tape.value(loss).item()?;
        let grads = tape.backward(loss)?;
        let grads = params.collect_grads(&grads, &bound);
        self.step(params, &grads)?;
        Ok(value)
    }
}
