use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::{Error, Result, Tensor};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    ConcatCols(Vec<usize>),
    BroadcastRows(usize),
    Relu(usize),
    Elu(usize),
    Sigmoid(usize),
    SoftmaxRows(usize),
    LogSoftmaxRows(usize),
    Sum(usize),
    Mean(usize),
    SquaredError(usize, usize),
    GatherRows(usize, Arc<[usize]>),
    ScatterAddRows(usize, Arc<[usize]>),
    ScaleRows(usize, Arc<[f64]>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of a forward computation.
///
/// Nodes are stored in evaluation order, which is a topological order of the
/// computation graph. A tape supports exactly one backward pass.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    consumed: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient with respect to `var`, or `None` when the loss does not
    /// depend on it.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        if var.tape != self.tape {
            return None;
        }
        self.grads.get(var.index).and_then(Option::as_ref)
    }
}

fn ensure_same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{}x{} vs {}x{}", a.rows(), a.cols(), b.rows(), b.cols())));
    }
    Ok(())
}

fn scatter_add(values: &Tensor, index: &[usize], rows: usize) -> Tensor {
    let mut out = Tensor::zeros(rows, values.cols());
    for (i, &r) in index.iter().enumerate() {
        for (o, v) in out.row_mut(r).iter_mut().zip(values.row(i)) {
            *o += v;
        }
    }
    out
}

fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self { id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed), nodes: Vec::new(), consumed: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a trainable input; gradients are produced for it.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_unchecked(value, Op::Leaf, true)
    }

    /// Records an input that gradients never flow into.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_unchecked(value, Op::Leaf, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        assert_eq!(var.tape, self.id, "variable belongs to a different tape");
        &self.nodes[var.index].value
    }

    fn push_unchecked(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var { tape: self.id, index: self.nodes.len() - 1 }
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[usize]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric(format!("{name} produced a non-finite value")));
        }
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        Ok(self.push_unchecked(value, op, requires_grad))
    }

    fn idx(&self, var: Var) -> Result<usize> {
        if var.tape != self.id {
            return Err(Error::Usage("variable belongs to a different tape".into()));
        }
        Ok(var.index)
    }

    fn val(&self, index: usize) -> &Tensor {
        &self.nodes[index].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let value = self.val(ia).matmul(self.val(ib))?;
        self.push("matmul", value, Op::MatMul(ia, ib), &[ia, ib])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let value = self.val(ia).add(self.val(ib))?;
        self.push("add", value, Op::Add(ia, ib), &[ia, ib])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let value = self.val(ia).sub(self.val(ib))?;
        self.push("sub", value, Op::Sub(ia, ib), &[ia, ib])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let value = self.val(ia).mul(self.val(ib))?;
        self.push("mul", value, Op::Mul(ia, ib), &[ia, ib])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let ia = self.idx(a)?;
        let value = self.val(ia).scale(factor);
        self.push("scale", value, Op::Scale(ia, factor), &[ia])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let idx = parts.iter().map(|&p| self.idx(p)).collect::<Result<Vec<_>>>()?;
        let values: Vec<&Tensor> = idx.iter().map(|&i| self.val(i)).collect();
        let value = Tensor::concat_cols(&values)?;
        self.push("concat_cols", value, Op::ConcatCols(idx.clone()), &idx)
    }

    /// Repeats a `1 × d` row vector `rows` times.
    pub fn broadcast_rows(&mut self, row: Var, rows: usize) -> Result<Var> {
        let ia = self.idx(row)?;
        let v = self.val(ia);
        if v.rows() != 1 {
            return Err(Error::shape("broadcast_rows", format!("expected a single row, got {}", v.rows())));
        }
        let mut data = Vec::with_capacity(rows * v.cols());
        for _ in 0..rows {
            data.extend_from_slice(v.data());
        }
        let value = Tensor::from_vec(rows, v.cols(), data)?;
        self.push("broadcast_rows", value, Op::BroadcastRows(ia), &[ia])
    }

    /// `a + 1·bias`, broadcasting a `1 × d` bias over the rows of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let rows = self.value(a).rows();
        let b = self.broadcast_rows(bias, rows)?;
        self.add(a, b)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let value = self.val(ia).map(|v| v.max(0.0));
        self.push("relu", value, Op::Relu(ia), &[ia])
    }

    /// ELU with unit scale: `x` for positive inputs, `exp(x) - 1` otherwise.
    pub fn elu(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let value = self.val(ia).map(|v| if v > 0.0 { v } else { v.exp_m1() });
        self.push("elu", value, Op::Elu(ia), &[ia])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let value = self.val(ia).map(|v| 1.0 / (1.0 + (-v).exp()));
        self.push("sigmoid", value, Op::Sigmoid(ia), &[ia])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let value = softmax_rows(self.val(ia));
        self.push("softmax_rows", value, Op::SoftmaxRows(ia), &[ia])
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let mut value = self.val(ia).clone();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        self.push("log_softmax_rows", value, Op::LogSoftmaxRows(ia), &[ia])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let value = Tensor::scalar(self.val(ia).sum());
        self.push("sum", value, Op::Sum(ia), &[ia])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = self.val(ia);
        if v.is_empty() {
            return Err(Error::shape("mean", "mean of an empty tensor"));
        }
        let value = Tensor::scalar(v.sum() / v.len() as f64);
        self.push("mean", value, Op::Mean(ia), &[ia])
    }

    /// `Σ (a - b)²` as a `1 × 1` value.
    pub fn squared_error(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        ensure_same_shape("squared_error", self.val(ia), self.val(ib))?;
        let total = self.val(ia).data().iter().zip(self.val(ib).data()).map(|(x, y)| (x - y) * (x - y)).sum();
        self.push("squared_error", Tensor::scalar(total), Op::SquaredError(ia, ib), &[ia, ib])
    }

    /// Row `i` of the result is row `index[i]` of `a`.
    pub fn gather_rows(&mut self, a: Var, index: &Arc<[usize]>) -> Result<Var> {
        let ia = self.idx(a)?;
        let value = self.val(ia).gather_rows(index)?;
        self.push("gather_rows", value, Op::GatherRows(ia, Arc::clone(index)), &[ia])
    }

    /// Sums row `i` of `a` into row `index[i]` of a `rows`-row result.
    pub fn scatter_add_rows(&mut self, a: Var, index: &Arc<[usize]>, rows: usize) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = self.val(ia);
        if v.rows() != index.len() {
            return Err(Error::shape("scatter_add_rows", format!("{} rows for {} indices", v.rows(), index.len())));
        }
        if let Some(&bad) = index.iter().find(|&&r| r >= rows) {
            return Err(Error::shape("scatter_add_rows", format!("target row {bad} out of range for {rows} rows")));
        }
        let value = scatter_add(v, index, rows);
        self.push("scatter_add_rows", value, Op::ScatterAddRows(ia, Arc::clone(index)), &[ia])
    }

    /// Multiplies row `i` of `a` by the constant `weights[i]`.
    pub fn scale_rows(&mut self, a: Var, weights: &Arc<[f64]>) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = self.val(ia);
        if v.rows() != weights.len() {
            return Err(Error::shape("scale_rows", format!("{} rows for {} weights", v.rows(), weights.len())));
        }
        let mut value = v.clone();
        for (r, &w) in weights.iter().enumerate() {
            for x in value.row_mut(r) {
                *x *= w;
            }
        }
        self.push("scale_rows", value, Op::ScaleRows(ia, Arc::clone(weights)), &[ia])
    }

    /// Reverse accumulation from a scalar `loss`. Consumes the tape: a
    /// second call is rejected.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if loss.tape != self.id {
            return Err(Error::Usage("loss is not recorded on this tape".into()));
        }
        if self.consumed {
            return Err(Error::Usage("backward already ran on this tape".into()));
        }
        let shape = self.nodes[loss.index].value.shape();
        if shape != (1, 1) {
            return Err(Error::shape("backward", format!("loss must be 1x1, got {}x{}", shape.0, shape.1)));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.index] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.index).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                grads[i] = Some(g);
                continue;
            }
            if !g.is_finite() {
                return Err(Error::Numeric(format!("non-finite gradient at node {i}")));
            }
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { tape: self.id, grads })
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let nodes = &self.nodes;
        let send = |target: usize, contribution: Tensor, grads: &mut [Option<Tensor>]| -> Result<()> {
            if !nodes[target].requires_grad {
                return Ok(());
            }
            match &mut grads[target] {
                Some(existing) => existing.add_assign(&contribution)?,
                slot @ None => *slot = Some(contribution),
            }
            Ok(())
        };
        let out = &nodes[i].value;
        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if nodes[*a].requires_grad {
                    send(*a, g.matmul(&nodes[*b].value.transpose())?, grads)?;
                }
                if nodes[*b].requires_grad {
                    send(*b, nodes[*a].value.transpose().matmul(g)?, grads)?;
                }
            }
            Op::Add(a, b) => {
                send(*a, g.clone(), grads)?;
                send(*b, g.clone(), grads)?;
            }
            Op::Sub(a, b) => {
                send(*a, g.clone(), grads)?;
                send(*b, g.scale(-1.0), grads)?;
            }
            Op::Mul(a, b) => {
                if nodes[*a].requires_grad {
                    send(*a, g.mul(&nodes[*b].value)?, grads)?;
                }
                if nodes[*b].requires_grad {
                    send(*b, g.mul(&nodes[*a].value)?, grads)?;
                }
            }
            Op::Scale(a, factor) => send(*a, g.scale(*factor), grads)?,
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let width = nodes[p].value.cols();
                    if nodes[p].requires_grad {
                        let mut piece = Tensor::zeros(g.rows(), width);
                        for r in 0..g.rows() {
                            piece.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + width]);
                        }
                        send(p, piece, grads)?;
                    }
                    offset += width;
                }
            }
            Op::BroadcastRows(a) => {
                let mut total = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (t, v) in total.row_mut(0).iter_mut().zip(g.row(r)) {
                        *t += v;
                    }
                }
                send(*a, total, grads)?;
            }
            Op::Relu(a) => {
                let x = &nodes[*a].value;
                let d = g.mul(&x.map(|v| if v > 0.0 { 1.0 } else { 0.0 }))?;
                send(*a, d, grads)?;
            }
            Op::Elu(a) => {
                let x = &nodes[*a].value;
                // out + 1 = exp(x) on the negative branch
                let slope = Tensor::from_vec(
                    x.rows(),
                    x.cols(),
                    x.data().iter().zip(out.data()).map(|(&xv, &yv)| if xv > 0.0 { 1.0 } else { yv + 1.0 }).collect(),
                )?;
                send(*a, g.mul(&slope)?, grads)?;
            }
            Op::Sigmoid(a) => {
                let slope = out.map(|y| y * (1.0 - y));
                send(*a, g.mul(&slope)?, grads)?;
            }
            Op::SoftmaxRows(a) => {
                let mut d = Tensor::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    let y = out.row(r);
                    let gr = g.row(r);
                    let inner: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((dv, &yv), &gv) in d.row_mut(r).iter_mut().zip(y).zip(gr) {
                        *dv = yv * (gv - inner);
                    }
                }
                send(*a, d, grads)?;
            }
            Op::LogSoftmaxRows(a) => {
                let mut d = Tensor::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    let y = out.row(r);
                    let gr = g.row(r);
                    let total: f64 = gr.iter().sum();
                    for ((dv, &yv), &gv) in d.row_mut(r).iter_mut().zip(y).zip(gr) {
                        *dv = gv - yv.exp() * total;
                    }
                }
                send(*a, d, grads)?;
            }
            Op::Sum(a) => {
                let x = &nodes[*a].value;
                send(*a, Tensor::filled(x.rows(), x.cols(), g.data()[0]), grads)?;
            }
            Op::Mean(a) => {
                let x = &nodes[*a].value;
                let v = g.data()[0] / x.len() as f64;
                send(*a, Tensor::filled(x.rows(), x.cols(), v), grads)?;
            }
            Op::SquaredError(a, b) => {
                let diff = nodes[*a].value.sub(&nodes[*b].value)?;
                let da = diff.scale(2.0 * g.data()[0]);
                if nodes[*b].requires_grad {
                    send(*b, da.scale(-1.0), grads)?;
                }
                send(*a, da, grads)?;
            }
            Op::GatherRows(a, index) => {
                let rows = nodes[*a].value.rows();
                send(*a, scatter_add(g, index, rows), grads)?;
            }
            Op::ScatterAddRows(a, index) => send(*a, g.gather_rows(index)?, grads)?,
            Op::ScaleRows(a, weights) => {
                let mut d = g.clone();
                for (r, &w) in weights.iter().enumerate() {
                    for v in d.row_mut(r) {
                        *v *= w;
                    }
                }
                send(*a, d, grads)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_derivative() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = tape.mul(x, x).unwrap();
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn relu_sum_derivative() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(1, 2, vec![-1.0, 2.0]).unwrap());
        let r = tape.relu(x).unwrap();
        let s = tape.sum(r).unwrap();
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn second_backward_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(1.0));
        let y = tape.scale(x, 2.0).unwrap();
        tape.backward(y).unwrap();
        assert!(matches!(tape.backward(y), Err(Error::Usage(_))));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(2, 1));
        assert!(matches!(tape.backward(x), Err(Error::Shape { .. })));
    }

    #[test]
    fn foreign_loss_rejected() {
        let mut a = Tape::new();
        let mut b = Tape::new();
        let x = a.leaf(Tensor::scalar(1.0));
        assert!(matches!(b.backward(x), Err(Error::Usage(_))));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::scalar(2.0));
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = tape.mul(c, x).unwrap();
        let grads = tape.backward(y).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(x).unwrap().data(), &[2.0]);
    }

    #[test]
    fn non_finite_forward_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(f64::MAX));
        assert!(matches!(tape.scale(x, 10.0), Err(Error::Numeric(_))));
    }

    #[test]
    fn matmul_shape_error() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(2, 3));
        let b = tape.leaf(Tensor::zeros(2, 3));
        assert!(matches!(tape.matmul(a, b), Err(Error::Shape { .. })));
    }
}
