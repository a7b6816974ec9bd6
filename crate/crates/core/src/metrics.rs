//! Evaluation metrics and CSV output.

use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result, Tensor};

fn check_len(op: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::shape(op, format!("{a} predictions for {b} targets")));
    }
    Ok(())
}

/// Fraction of masked nodes predicted correctly. `None` counts every node.
pub fn node_accuracy(pred: &[usize], truth: &[usize], mask: Option<&[bool]>) -> Result<f64> {
    check_len("node_accuracy", pred.len(), truth.len())?;
    if let Some(m) = mask {
        check_len("node_accuracy", m.len(), truth.len())?;
    }
    let counted = |i: &usize| mask.is_none_or(|m| m[*i]);
    let total = (0..pred.len()).filter(counted).count();
    if total == 0 {
        return Err(Error::Usage("accuracy over an empty node set".into()));
    }
    let correct = (0..pred.len()).filter(counted).filter(|&i| pred[i] == truth[i]).count();
    Ok(correct as f64 / total as f64)
}

/// Fraction of graphs every node of which is predicted correctly.
pub fn graph_accuracy(graphs: &[(Vec<usize>, Vec<usize>)]) -> Result<f64> {
    if graphs.is_empty() {
        return Err(Error::Usage("graph accuracy needs at least one graph".into()));
    }
    let mut correct = 0;
    for (pred, truth) in graphs {
        check_len("graph_accuracy", pred.len(), truth.len())?;
        if pred == truth {
            correct += 1;
        }
    }
    Ok(correct as f64 / graphs.len() as f64)
}

/// `TP / (TP + (FP + FN)/2)`.
pub fn micro_f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = tp as f64 + 0.5 * (fp + fn_) as f64;
    if denom == 0.0 {
        return 1.0;
    }
    tp as f64 / denom
}

/// Micro-averaged F1 of single-label multiclass predictions. Each wrong
/// prediction is one false positive (for the predicted class) and one false
/// negative (for the true class).
pub fn micro_f1(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_len("micro_f1", pred.len(), truth.len())?;
    let tp = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    let wrong = pred.len() - tp;
    Ok(micro_f1_from_counts(tp, wrong, wrong))
}

/// Element-wise mean squared error.
pub fn mse(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(Error::shape("mse", format!("{:?} vs {:?}", pred.shape(), truth.shape())));
    }
    if pred.is_empty() {
        return Err(Error::Usage("mean squared error over no entries".into()));
    }
    let sse: f64 = pred.data().iter().zip(truth.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sse / pred.len() as f64)
}

/// Decimal rendering with 6 significant digits, trailing zeros trimmed.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    // Round first so 999999.7 picks the exponent of its rounded value.
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("numeric exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// In-memory CSV table with a fixed column order.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

/// One CSV cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) => format_sig(*v),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, cells: Vec<Cell>) -> Result<()> {
        if cells.len() != self.header.len() {
            return Err(Error::shape("csv_row", format!("{} cells for {} columns", cells.len(), self.header.len())));
        }
        self.rows.push(cells.iter().map(Cell::render).collect());
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.header.join(","));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }
}
