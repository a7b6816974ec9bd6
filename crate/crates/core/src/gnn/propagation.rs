use std::sync::Arc;

use crate::autodiff::{Tape, Var};
use crate::gnn::Backbone;
use crate::{Result, Tensor};

/// Normalized adjacency with self-connections, stored as a weighted edge
/// list so that `Â h` is one gather, a row scaling and one scatter-add.
#[derive(Clone, Debug, PartialEq)]
pub struct Propagation {
    num_nodes: usize,
    src: Arc<[usize]>,
    dst: Arc<[usize]>,
    weights: Arc<[f64]>,
}

impl Propagation {
    /// `D̃^(-1/2) (A + I) D̃^(-1/2)` with `D̃` the degree of `A + I`.
    pub fn gcn(num_nodes: usize, edges: &[(usize, usize)]) -> Self {
        let deg = Self::degrees(num_nodes, edges);
        Self::build(num_nodes, edges, |s, d| 1.0 / (deg[s] * deg[d]).sqrt())
    }

    /// Row-normalized `A + I`: each node averages itself and its neighbors.
    pub fn mean(num_nodes: usize, edges: &[(usize, usize)]) -> Self {
        let deg = Self::degrees(num_nodes, edges);
        Self::build(num_nodes, edges, |_, d| 1.0 / deg[d])
    }

    pub fn for_backbone(backbone: Backbone, num_nodes: usize, edges: &[(usize, usize)]) -> Self {
        match backbone {
            Backbone::Gcn => Self::gcn(num_nodes, edges),
            Backbone::MeanAggregate => Self::mean(num_nodes, edges),
        }
    }

    fn degrees(num_nodes: usize, edges: &[(usize, usize)]) -> Vec<f64> {
        let mut deg = vec![1.0; num_nodes];
        for &(_, d) in edges {
            deg[d] += 1.0;
        }
        deg
    }

    fn build(num_nodes: usize, edges: &[(usize, usize)], weight: impl Fn(usize, usize) -> f64) -> Self {
        let mut src = Vec::with_capacity(edges.len() + num_nodes);
        let mut dst = Vec::with_capacity(edges.len() + num_nodes);
        let mut weights = Vec::with_capacity(edges.len() + num_nodes);
        for i in 0..num_nodes {
            src.push(i);
            dst.push(i);
            weights.push(weight(i, i));
        }
        for &(s, d) in edges {
            src.push(s);
            dst.push(d);
            weights.push(weight(s, d));
        }
        Self { num_nodes, src: src.into(), dst: dst.into(), weights: weights.into() }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// `Â h` on the tape.
    pub fn apply(&self, tape: &mut Tape, h: Var) -> Result<Var> {
        let messages = tape.gather_rows(h, &self.src)?;
        let weighted = tape.scale_rows(messages, &self.weights)?;
        tape.scatter_add_rows(weighted, &self.dst, self.num_nodes)
    }

    /// Dense `n × n` form of `Â`.
    pub fn dense(&self) -> Tensor {
        let mut a = Tensor::zeros(self.num_nodes, self.num_nodes);
        for ((&s, &d), &w) in self.src.iter().zip(self.dst.iter()).zip(self.weights.iter()) {
            a.set(d, s, a.get(d, s) + w);
        }
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isolated_node_is_identity_row() {
        let p = Propagation::gcn(3, &[(0, 1), (1, 0)]);
        let a = p.dense();
        assert_eq!(a.row(2), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn single_edge_all_halves() {
        let a = Propagation::gcn(2, &[(0, 1), (1, 0)]).dense();
        assert!(a.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn mean_rows_sum_to_one() {
        let a = Propagation::mean(4, &[(0, 1), (1, 0), (1, 2), (2, 1), (0, 2), (2, 0)]).dense();
        for r in 0..4 {
            assert!((a.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }
}
