use crate::autodiff::{Tape, Var};
use crate::{Result, Tensor};

/// Outcome of comparing analytic gradients against central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub entries_checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks the gradient of a scalar closure with respect to every entry of
/// `inputs` using central differences of width `2 * step`.
///
/// The closure receives a fresh tape and one leaf per input and must return a
/// `1 × 1` variable. Relative error is `|a - n| / max(|a|, |n|, 1e-6)`, so
/// near-zero gradients are effectively compared in absolute terms.
pub fn gradient_check<F>(closure: F, inputs: &[Tensor], step: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = closure(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = inputs
        .iter()
        .zip(&vars)
        .map(|(t, &v)| grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols())))
        .collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = closure(&mut tape, &vars)?;
        tape.value(loss).item()
    };

    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut checked = 0;
    for k in 0..inputs.len() {
        for e in 0..inputs[k].len() {
            let original = inputs[k].data()[e];
            work[k].data_mut()[e] = original + step;
            let plus = eval(&work)?;
            work[k].data_mut()[e] = original - step;
            let minus = eval(&work)?;
            work[k].data_mut()[e] = original;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[k].data()[e];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(1e-6);
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(rel);
            checked += 1;
        }
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        max_abs_error: max_abs,
        entries_checked: checked,
        tolerance,
        passed: max_rel < tolerance,
    })
}
