use std::ops::Range;
use std::sync::Arc;

use crate::gnn::{Backbone, EdgeAggregation, Propagation};
use crate::graph::Graph;
use crate::{Error, Result, Tensor};

/// How target rows of a (possibly batched) input divide into graphs.
/// Each group can sit at its own diffusion step.
pub trait TargetLayout {
    fn target_rows(&self) -> usize;
    /// Group index of every target row.
    fn row_groups(&self) -> &Arc<[usize]>;
    /// Target-row range of every group, in order.
    fn group_rows(&self) -> &[Range<usize>];

    fn num_groups(&self) -> usize {
        self.group_rows().len()
    }
}

/// Node-target conditioning: attributes and normalized adjacency of one
/// graph or a disjoint union of graphs.
#[derive(Clone, Debug)]
pub struct NodeInput {
    pub x: Tensor,
    pub propagation: Propagation,
    node_group: Arc<[usize]>,
    group_rows: Vec<Range<usize>>,
}

impl NodeInput {
    pub fn new(graph: &Graph, backbone: Backbone) -> Self {
        Self::batch(&[graph], backbone).expect("a single graph always batches")
    }

    /// Disjoint union of `graphs`; node rows are concatenated in order.
    pub fn batch(graphs: &[&Graph], backbone: Backbone) -> Result<Self> {
        let width = graphs.first().map_or(0, |g| g.node_attrs().cols());
        if graphs.iter().any(|g| g.node_attrs().cols() != width) {
            return Err(Error::shape("node_input", "graphs differ in attribute width"));
        }
        let mut edges = Vec::new();
        let mut group = Vec::new();
        let mut ranges = Vec::with_capacity(graphs.len());
        let mut offset = 0;
        for (k, g) in graphs.iter().enumerate() {
            edges.extend(g.edges().iter().map(|&(s, d)| (s + offset, d + offset)));
            group.extend(std::iter::repeat_n(k, g.num_nodes()));
            ranges.push(offset..offset + g.num_nodes());
            offset += g.num_nodes();
        }
        let parts: Vec<&Tensor> = graphs.iter().map(|g| g.node_attrs()).collect();
        Ok(Self {
            x: Tensor::concat_rows(&parts, width)?,
            propagation: Propagation::for_backbone(backbone, offset, &edges),
            node_group: group.into(),
            group_rows: ranges,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.x.rows()
    }
}

impl TargetLayout for NodeInput {
    fn target_rows(&self) -> usize {
        self.x.rows()
    }

    fn row_groups(&self) -> &Arc<[usize]> {
        &self.node_group
    }

    fn group_rows(&self) -> &[Range<usize>] {
        &self.group_rows
    }
}

/// Edge-target conditioning: the pair list doubles as the message-passing
/// structure, with per-pair attributes.
#[derive(Clone, Debug)]
pub struct EdgeInput {
    pub edge_x: Tensor,
    pub src: Arc<[usize]>,
    pub dst: Arc<[usize]>,
    pub num_nodes: usize,
    /// Pair rows that carry messages, with their endpoints and weights.
    pub msg_pairs: Arc<[usize]>,
    pub msg_src: Arc<[usize]>,
    pub msg_dst: Arc<[usize]>,
    pub msg_weight: Arc<[f64]>,
    node_group: Arc<[usize]>,
    pair_group: Arc<[usize]>,
    group_rows: Vec<Range<usize>>,
}

impl EdgeInput {
    pub fn new(graph: &Graph, gate: Option<usize>, aggregation: EdgeAggregation) -> Result<Self> {
        Self::batch(&[graph], gate, aggregation)
    }

    /// Disjoint union of graphs whose edges carry attributes.
    ///
    /// Every pair is a target row. With `gate = Some(c)` only pairs whose
    /// attribute column `c` is nonzero pass messages; otherwise all do.
    /// Under mean aggregation each message is weighted by the inverse
    /// in-degree of its receiver.
    pub fn batch(graphs: &[&Graph], gate: Option<usize>, aggregation: EdgeAggregation) -> Result<Self> {
        let mut width = None;
        let mut src = Vec::new();
        let mut dst = Vec::new();
        let mut node_group = Vec::new();
        let mut pair_group = Vec::new();
        let mut ranges = Vec::with_capacity(graphs.len());
        let mut attrs = Vec::with_capacity(graphs.len());
        let (mut nodes, mut pairs) = (0, 0);
        let mean = aggregation == EdgeAggregation::Mean;
        let (mut msg_pairs, mut msg_src, mut msg_dst, mut msg_weight) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (k, g) in graphs.iter().enumerate() {
            let a = g.edge_attrs().ok_or_else(|| Error::Usage("edge input needs edge attributes".into()))?;
            if *width.get_or_insert(a.cols()) != a.cols() {
                return Err(Error::shape("edge_input", "graphs differ in edge attribute width"));
            }
            if let Some(c) = gate {
                if c >= a.cols() {
                    return Err(Error::shape(
                        "edge_input",
                        format!("gate column {c} outside {} edge attribute columns", a.cols()),
                    ));
                }
            }
            attrs.push(a);
            let mut deg = vec![0usize; g.num_nodes()];
            let first_msg = msg_pairs.len();
            for (k, &(s, d)) in g.edges().iter().enumerate() {
                src.push(s + nodes);
                dst.push(d + nodes);
                let carries = gate.is_none_or(|c| a.get(k, c) != 0.0);
                if carries {
                    msg_pairs.push(pairs + k);
                    msg_src.push(s + nodes);
                    msg_dst.push(d + nodes);
                    deg[d] += 1;
                }
            }
            for m in first_msg..msg_pairs.len() {
                msg_weight.push(if mean { 1.0 / deg[msg_dst[m] - nodes] as f64 } else { 1.0 });
            }
            node_group.extend(std::iter::repeat_n(k, g.num_nodes()));
            pair_group.extend(std::iter::repeat_n(k, g.num_edges()));
            ranges.push(pairs..pairs + g.num_edges());
            nodes += g.num_nodes();
            pairs += g.num_edges();
        }
        Ok(Self {
            edge_x: Tensor::concat_rows(&attrs, width.unwrap_or(0))?,
            src: src.into(),
            dst: dst.into(),
            num_nodes: nodes,
            msg_pairs: msg_pairs.into(),
            msg_src: msg_src.into(),
            msg_dst: msg_dst.into(),
            msg_weight: msg_weight.into(),
            node_group: node_group.into(),
            pair_group: pair_group.into(),
            group_rows: ranges,
        })
    }

    pub fn node_groups(&self) -> &Arc<[usize]> {
        &self.node_group
    }
}

impl TargetLayout for EdgeInput {
    fn target_rows(&self) -> usize {
        self.edge_x.rows()
    }

    fn row_groups(&self) -> &Arc<[usize]> {
        &self.pair_group
    }

    fn group_rows(&self) -> &[Range<usize>] {
        &self.group_rows
    }
}
