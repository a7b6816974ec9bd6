//! Graph data model, file ingestion, target relaxation and synthetic
//! generators.

mod generate;
mod io;
mod relax;

pub use generate::{
    generate_homophily_graph, generate_reasoning_graph, partition_subgraphs, HomophilySpec, ReasoningGraphSpec,
    PRESENT_COLUMN,
};
pub use io::{
    graph_from_json, graph_to_json, load_dataset, load_graph_json, save_dataset, save_graph_json, DatasetManifest,
    ManifestEntry,
};
pub use relax::{discretize, one_hot_relax, one_hot_relax_partial};

use crate::{Error, Result, Tensor};

/// A graph with node attributes and optional node/edge targets.
///
/// Edges are directed `(src, dst)` pairs; undirected inputs store both
/// directions. Self-loops are never stored. Node labels are class indices
/// with `None` marking an unlabeled node.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    node_attrs: Tensor,
    edge_attrs: Option<Tensor>,
    labels: Option<Vec<Option<usize>>>,
    num_classes: usize,
    edge_targets: Option<Tensor>,
    split: Option<String>,
}

impl Graph {
    pub fn new(num_nodes: usize, edges: Vec<(usize, usize)>, node_attrs: Tensor) -> Result<Self> {
        if node_attrs.rows() != num_nodes {
            return Err(Error::Value(format!("{} attribute rows for {num_nodes} nodes", node_attrs.rows())));
        }
        for (k, &(s, d)) in edges.iter().enumerate() {
            if s >= num_nodes || d >= num_nodes {
                return Err(Error::Value(format!("edge {k} [{s}, {d}] references a node outside 0..{num_nodes}")));
            }
            if s == d {
                return Err(Error::Value(format!("edge {k} [{s}, {d}] is a self-loop")));
            }
        }
        Ok(Self {
            num_nodes,
            edges,
            node_attrs,
            edge_attrs: None,
            labels: None,
            num_classes: 0,
            edge_targets: None,
            split: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<Option<usize>>, num_classes: usize) -> Result<Self> {
        if labels.len() != self.num_nodes {
            return Err(Error::Value(format!("{} labels for {} nodes", labels.len(), self.num_nodes)));
        }
        if let Some((i, l)) =
            labels.iter().enumerate().find_map(|(i, l)| l.filter(|&c| c >= num_classes).map(|c| (i, c)))
        {
            return Err(Error::Value(format!("node {i} label {l} outside 0..{num_classes}")));
        }
        self.labels = Some(labels);
        self.num_classes = num_classes;
        Ok(self)
    }

    pub fn with_edge_attrs(mut self, attrs: Tensor) -> Result<Self> {
        if attrs.rows() != self.edges.len() {
            return Err(Error::Value(format!("{} edge attribute rows for {} edges", attrs.rows(), self.edges.len())));
        }
        self.edge_attrs = Some(attrs);
        Ok(self)
    }

    pub fn with_edge_targets(mut self, targets: Tensor) -> Result<Self> {
        if targets.rows() != self.edges.len() {
            return Err(Error::Value(format!("{} edge target rows for {} edges", targets.rows(), self.edges.len())));
        }
        self.edge_targets = Some(targets);
        Ok(self)
    }

    pub fn with_split(mut self, split: Option<String>) -> Self {
        self.split = split;
        self
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn node_attrs(&self) -> &Tensor {
        &self.node_attrs
    }

    pub fn edge_attrs(&self) -> Option<&Tensor> {
        self.edge_attrs.as_ref()
    }

    pub fn labels(&self) -> Option<&[Option<usize>]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn edge_targets(&self) -> Option<&Tensor> {
        self.edge_targets.as_ref()
    }

    pub fn split(&self) -> Option<&str> {
        self.split.as_deref()
    }

    /// `true` for labeled nodes (the set L); all `false` without labels.
    pub fn label_mask(&self) -> Vec<bool> {
        match &self.labels {
            Some(l) => l.iter().map(Option::is_some).collect(),
            None => vec![false; self.num_nodes],
        }
    }

    /// Labels of a fully labeled graph.
    pub fn full_labels(&self) -> Result<Vec<usize>> {
        let labels = self.labels.as_ref().ok_or_else(|| Error::Usage("graph has no node labels".into()))?;
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| l.ok_or_else(|| Error::Usage(format!("node {i} is unlabeled"))))
            .collect()
    }

    /// One-hot relaxed node targets; unlabeled rows are zero.
    pub fn node_targets(&self) -> Result<Tensor> {
        let labels = self.labels.as_ref().ok_or_else(|| Error::Usage("graph has no node labels".into()))?;
        one_hot_relax_partial(labels, self.num_classes)
    }

    /// Copy with the labels of every node where `keep` is false removed.
    pub fn with_hidden_labels(&self, keep: &[bool]) -> Result<Self> {
        let labels = self.labels.as_ref().ok_or_else(|| Error::Usage("graph has no node labels".into()))?;
        if keep.len() != self.num_nodes {
            return Err(Error::Value("mask length differs from node count".into()));
        }
        let mut g = self.clone();
        g.labels = Some(labels.iter().zip(keep).map(|(&l, &k)| if k { l } else { None }).collect());
        Ok(g)
    }

    /// Subgraph induced by `nodes`, renumbered in the given order.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<Self> {
        let mut map = vec![usize::MAX; self.num_nodes];
        for (new, &old) in nodes.iter().enumerate() {
            if old >= self.num_nodes {
                return Err(Error::Value(format!("node {old} out of range")));
            }
            map[old] = new;
        }
        let mut edges = Vec::new();
        let mut kept = Vec::new();
        for (k, &(s, d)) in self.edges.iter().enumerate() {
            if map[s] != usize::MAX && map[d] != usize::MAX {
                edges.push((map[s], map[d]));
                kept.push(k);
            }
        }
        let mut g = Graph::new(nodes.len(), edges, self.node_attrs.gather_rows(nodes)?)?;
        if let Some(a) = &self.edge_attrs {
            g = g.with_edge_attrs(a.gather_rows(&kept)?)?;
        }
        if let Some(t) = &self.edge_targets {
            g = g.with_edge_targets(t.gather_rows(&kept)?)?;
        }
        if let Some(l) = &self.labels {
            g = g.with_labels(nodes.iter().map(|&i| l[i]).collect(), self.num_classes)?;
        }
        Ok(g.with_split(self.split.clone()))
    }

    /// Disjoint union with nodes renumbered consecutively. Node labels are
    /// kept when every part has them.
    pub fn disjoint_union(graphs: &[&Graph]) -> Result<Self> {
        let Some(first) = graphs.first() else {
            return Err(Error::Value("union of no graphs".into()));
        };
        let width = first.node_attrs.cols();
        let mut edges = Vec::new();
        let mut offset = 0;
        for g in graphs {
            edges.extend(g.edges.iter().map(|&(s, d)| (s + offset, d + offset)));
            offset += g.num_nodes;
        }
        let parts: Vec<&Tensor> = graphs.iter().map(|g| &g.node_attrs).collect();
        let mut union = Graph::new(offset, edges, Tensor::concat_rows(&parts, width)?)?;
        if graphs.iter().all(|g| g.labels.is_some()) {
            let classes = graphs.iter().map(|g| g.num_classes).max().unwrap_or(0);
            let labels = graphs.iter().flat_map(|g| g.labels.as_ref().expect("checked").iter().copied()).collect();
            union = union.with_labels(labels, classes)?;
        }
        Ok(union)
    }
}

/// Train / validation / test graphs. Inductive datasets keep distinct graphs
/// per split; a transductive dataset is a single graph whose label mask
/// carries the partition.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Graph>,
    pub validation: Vec<Graph>,
    pub test: Vec<Graph>,
    /// Held-out graphs larger than the training ones.
    pub test_large: Vec<Graph>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Graph {
        Graph::new(
            3,
            vec![(0, 1), (1, 0), (1, 2), (2, 1)],
            Tensor::from_rows(&[vec![1.0], vec![2.0], vec![3.0]], 1).unwrap(),
        )
        .unwrap()
        .with_labels(vec![Some(0), Some(1), None], 2)
        .unwrap()
    }

    #[test]
    fn self_loops_rejected() {
        let err = Graph::new(2, vec![(1, 1)], Tensor::zeros(2, 1)).unwrap_err();
        assert!(err.to_string().contains("self-loop"));
    }

    #[test]
    fn out_of_range_edge_named() {
        let err = Graph::new(2, vec![(0, 5)], Tensor::zeros(2, 1)).unwrap_err();
        assert!(err.to_string().contains("edge 0 [0, 5]"));
    }

    #[test]
    fn label_mask_and_targets() {
        let g = path3();
        assert_eq!(g.label_mask(), vec![true, true, false]);
        let t = g.node_targets().unwrap();
        assert_eq!(t.data(), &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn induced_subgraph_keeps_internal_edges() {
        let g = path3().induced_subgraph(&[2, 1]).unwrap();
        assert_eq!(g.edges(), &[(1, 0), (0, 1)]);
        assert_eq!(g.node_attrs().data(), &[3.0, 2.0]);
        assert_eq!(g.labels().unwrap(), &[None, Some(1)]);
    }
}
