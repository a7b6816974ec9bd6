//! Synthetic graph generators.

use serde::{Deserialize, Serialize};

use super::Graph;
use crate::rng::SeededRng;
use crate::{Error, Result, Tensor};

/// Stochastic-block-model graph where node attributes are a noisy one-hot
/// code of the class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomophilySpec {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub feature_noise: f64,
}

impl HomophilySpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_nodes == 0 || self.num_classes == 0 {
            return Err(Error::Value("homophily graph needs nodes and classes".into()));
        }
        if !(0.0 <= self.p_inter && self.p_inter < self.p_intra && self.p_intra <= 1.0) {
            return Err(Error::Value(format!(
                "need 0 <= p_inter < p_intra <= 1, got p_inter = {}, p_intra = {}",
                self.p_inter, self.p_intra
            )));
        }
        if self.feature_noise.is_nan() || self.feature_noise < 0.0 {
            return Err(Error::Value(format!("feature_noise must be >= 0, got {}", self.feature_noise)));
        }
        Ok(())
    }
}

pub fn generate_homophily_graph(spec: &HomophilySpec, seed: u64) -> Result<Graph> {
    spec.validate()?;
    let mut rng = SeededRng::new(seed);
    let n = spec.num_nodes;
    let classes: Vec<usize> = (0..n).map(|_| rng.below(spec.num_classes)).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if classes[i] == classes[j] { spec.p_intra } else { spec.p_inter };
            if rng.uniform() < p {
                edges.push((i, j));
                edges.push((j, i));
            }
        }
    }
    let mut x = Tensor::zeros(n, spec.num_classes);
    for (i, &c) in classes.iter().enumerate() {
        for k in 0..spec.num_classes {
            let base = if k == c { 1.0 } else { 0.0 };
            x.set(i, k, base + spec.feature_noise * rng.normal());
        }
    }
    Graph::new(n, edges, x)?.with_labels(classes.into_iter().map(Some).collect(), spec.num_classes)
}

/// Random weighted undirected graph for the pair-target reasoning tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReasoningGraphSpec {
    pub num_nodes: usize,
    pub edge_prob: f64,
    pub weight_range: (f64, f64),
}

/// Column of reasoning edge attributes flagging sampled (present) edges.
pub const PRESENT_COLUMN: usize = 1;

/// Builds a graph whose edge list is every ordered pair `(i, j)`, `i != j`,
/// in row-major order. Edge attributes are `[weight, present]`: sampled edges
/// carry a weight drawn from `weight_range` in both directions and
/// `present = 1`; absent pairs are `[0, 0]`. Node attributes are a single
/// zero column.
pub fn generate_reasoning_graph(spec: &ReasoningGraphSpec, seed: u64) -> Result<Graph> {
    let n = spec.num_nodes;
    if n < 2 {
        return Err(Error::Value(format!("reasoning graphs need >= 2 nodes, got {n}")));
    }
    if !(spec.edge_prob > 0.0 && spec.edge_prob <= 1.0) {
        return Err(Error::Value(format!("edge_prob must lie in (0, 1], got {}", spec.edge_prob)));
    }
    let (lo, hi) = spec.weight_range;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::Value(format!("invalid weight range ({lo}, {hi})")));
    }
    let mut rng = SeededRng::new(seed);
    let mut weight = vec![0.0; n * n];
    let mut present = vec![false; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.uniform() < spec.edge_prob {
                let w = rng.uniform_range(lo, hi);
                for (a, b) in [(i, j), (j, i)] {
                    weight[a * n + b] = w;
                    present[a * n + b] = true;
                }
            }
        }
    }
    let mut pairs = Vec::with_capacity(n * (n - 1));
    let mut attrs = Vec::with_capacity(2 * n * (n - 1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                pairs.push((i, j));
                attrs.push(weight[i * n + j]);
                attrs.push(if present[i * n + j] { 1.0 } else { 0.0 });
            }
        }
    }
    let attrs = Tensor::from_vec(pairs.len(), 2, attrs)?;
    Graph::new(n, pairs, Tensor::zeros(n, 1))?.with_edge_attrs(attrs)
}

/// Randomly partitions the nodes into `parts` near-equal groups and returns
/// the induced subgraph of each group (nodes kept in ascending order).
pub fn partition_subgraphs(graph: &Graph, parts: usize, rng: &mut SeededRng) -> Result<Vec<Graph>> {
    if parts == 0 || parts > graph.num_nodes() {
        return Err(Error::Value(format!("cannot split {} nodes into {parts} parts", graph.num_nodes())));
    }
    let mut order: Vec<usize> = (0..graph.num_nodes()).collect();
    rng.shuffle(&mut order);
    let n = order.len();
    (0..parts)
        .map(|p| {
            let mut nodes = order[p * n / parts..(p + 1) * n / parts].to_vec();
            nodes.sort_unstable();
            graph.induced_subgraph(&nodes)
        })
        .collect()
}
