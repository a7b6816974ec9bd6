//! Algorithmic reasoning over all node pairs: exact oracles, dataset
//! builders and mean-squared-error evaluation of pair predictors.

mod dataset;
mod model;
mod oracle;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::graph::Graph;
use crate::{Error, Result, Tensor};

pub use dataset::{build_reasoning_dataset, ReasoningDataConfig, Standardizer};
pub use model::{eval_reasoning, train_reasoner, ConstantPredictor, DiffusionReasoner, PairPredictor};
pub use oracle::{
    oracle_connected_components, oracle_edge_copy, oracle_shortest_path, oracle_shortest_path_capped, pair_index,
    pair_weights, reasoning_instance,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    EdgeCopy,
    ShortestPath,
    ConnectedComponents,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::EdgeCopy, Task::ShortestPath, Task::ConnectedComponents];

    pub fn name(self) -> &'static str {
        match self {
            Task::EdgeCopy => "edge_copy",
            Task::ShortestPath => "shortest_path",
            Task::ConnectedComponents => "connected_components",
        }
    }

    /// Pair targets of `graph` for this task.
    pub fn oracle(self, graph: &Graph) -> Result<Tensor> {
        match self {
            Task::EdgeCopy => oracle_edge_copy(graph),
            Task::ShortestPath => oracle_shortest_path(graph),
            Task::ConnectedComponents => oracle_connected_components(graph),
        }
    }

    /// Default edge probability of generated `n`-node instances: dense
    /// enough that shortest paths rarely hit the unreachable cap, sparse
    /// enough that component instances split into several components.
    pub fn default_edge_prob(self, n: usize) -> f64 {
        let n = n as f64;
        match self {
            Task::EdgeCopy => 0.5,
            Task::ShortestPath => (3.0 * n.ln() / n).min(1.0),
            Task::ConnectedComponents => (1.5 / n).min(0.75),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| {
            Error::Config(format!("unknown task `{s}` (expected edge_copy, shortest_path or connected_components)"))
        })
    }
}
