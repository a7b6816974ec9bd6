use serde::{Deserialize, Serialize};

use crate::graph::{generate_reasoning_graph, DatasetSplit, Graph, ReasoningGraphSpec};
use crate::reasoning::Task;
use crate::rng::SeededRng;
use crate::{Error, Result, Tensor};

/// Instance counts and distributions of a reasoning dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReasoningDataConfig {
    #[serde(default = "d_train_sizes")]
    pub train_sizes: Vec<usize>,
    #[serde(default = "d_train_per_size")]
    pub train_per_size: usize,
    #[serde(default = "d_test_size")]
    pub test_size: usize,
    #[serde(default = "d_large_size")]
    pub large_size: usize,
    #[serde(default = "d_test_count")]
    pub test_count: usize,
    /// Overrides the task's default edge probability.
    #[serde(default)]
    pub edge_prob: Option<f64>,
    #[serde(default = "d_weights")]
    pub weight_range: (f64, f64),
}

fn d_train_sizes() -> Vec<usize> {
    (2..=10).collect()
}
fn d_train_per_size() -> usize {
    100
}
fn d_test_size() -> usize {
    10
}
fn d_large_size() -> usize {
    15
}
fn d_test_count() -> usize {
    100
}
fn d_weights() -> (f64, f64) {
    (0.1, 1.0)
}

impl Default for ReasoningDataConfig {
    fn default() -> Self {
        Self {
            train_sizes: d_train_sizes(),
            train_per_size: d_train_per_size(),
            test_size: d_test_size(),
            large_size: d_large_size(),
            test_count: d_test_count(),
            edge_prob: None,
            weight_range: d_weights(),
        }
    }
}

impl ReasoningDataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_sizes.is_empty() || self.train_per_size == 0 {
            return Err(Error::Config("reasoning data needs training instances".into()));
        }
        if self.train_sizes.iter().chain([&self.test_size, &self.large_size]).any(|&n| n < 2) {
            return Err(Error::Config("reasoning instances need at least 2 nodes".into()));
        }
        if let Some(p) = self.edge_prob {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Config(format!("edge_prob must lie in (0, 1], got {p}")));
            }
        }
        let (lo, hi) = self.weight_range;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Config(format!("weight_range must satisfy 0 <= lo <= hi, got ({lo}, {hi})")));
        }
        Ok(())
    }
}

fn instance(task: Task, cfg: &ReasoningDataConfig, n: usize, seed: u64, split: &str) -> Result<Graph> {
    let spec = ReasoningGraphSpec {
        num_nodes: n,
        edge_prob: cfg.edge_prob.unwrap_or_else(|| task.default_edge_prob(n)),
        weight_range: cfg.weight_range,
    };
    let g = generate_reasoning_graph(&spec, seed)?;
    let targets = task.oracle(&g)?;
    Ok(g.with_edge_targets(targets)?.with_split(Some(split.to_string())))
}

/// Generated instances with oracle targets: `train` holds
/// `train_per_size` graphs of every training size, `test` holds
/// `test_count` graphs of `test_size` nodes and `test_large` as many of
/// `large_size` nodes.
pub fn build_reasoning_dataset(task: Task, cfg: &ReasoningDataConfig, seed: u64) -> Result<DatasetSplit> {
    cfg.validate()?;
    let mut rng = SeededRng::new(seed);
    let mut out = DatasetSplit::default();
    for &n in &cfg.train_sizes {
        for _ in 0..cfg.train_per_size {
            out.train.push(instance(task, cfg, n, rng.next_u64(), "train")?);
        }
    }
    for _ in 0..cfg.test_count {
        out.test.push(instance(task, cfg, cfg.test_size, rng.next_u64(), "test")?);
    }
    for _ in 0..cfg.test_count {
        out.test_large.push(instance(task, cfg, cfg.large_size, rng.next_u64(), "test_large")?);
    }
    Ok(out)
}

/// Affine map of targets to zero mean and unit variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    /// Statistics over every pair target of `graphs`. A constant target
    /// keeps unit scale.
    pub fn fit(graphs: &[Graph]) -> Result<Self> {
        let mut values = Vec::new();
        for g in graphs {
            let t = g.edge_targets().ok_or_else(|| Error::Usage("graph has no pair targets".into()))?;
            values.extend_from_slice(t.data());
        }
        if values.is_empty() {
            return Err(Error::Usage("no pair targets to standardize".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        Ok(Self { mean, std })
    }

    pub fn identity() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }

    pub fn forward(&self, t: &Tensor) -> Tensor {
        t.map(|v| (v - self.mean) / self.std)
    }

    pub fn inverse(&self, t: &Tensor) -> Tensor {
        t.map(|v| v * self.std + self.mean)
    }
}
