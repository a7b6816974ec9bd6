use crate::graph::Graph;
use crate::{Error, Result, Tensor};

/// Row of the ordered pair `(i, j)`, `i != j`, in the row-major pair list of
/// an `n`-node instance.
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i != j && i < n && j < n);
    i * (n - 1) + if j > i { j - 1 } else { j }
}

/// Pair-complete instance from an undirected weighted edge list.
pub fn reasoning_instance(n: usize, edges: &[(usize, usize, f64)]) -> Result<Graph> {
    let mut weight = vec![None; n * n];
    for &(a, b, w) in edges {
        if a >= n || b >= n || a == b {
            return Err(Error::Value(format!("invalid edge ({a}, {b}) on {n} nodes")));
        }
        weight[a * n + b] = Some(w);
        weight[b * n + a] = Some(w);
    }
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1));
    let mut attrs = Vec::with_capacity(2 * pairs.capacity());
    for i in 0..n {
        for j in 0..n {
            if i != j {
                pairs.push((i, j));
                let w = weight[i * n + j];
                attrs.push(w.unwrap_or(0.0));
                attrs.push(if w.is_some() { 1.0 } else { 0.0 });
            }
        }
    }
    let attrs = Tensor::from_vec(pairs.len(), 2, attrs)?;
    Graph::new(n, pairs, Tensor::zeros(n, 1))?.with_edge_attrs(attrs)
}

/// Dense `n × n` weight matrix (`None` where no edge) read from the edge
/// list. Column 0 of the edge attributes is the weight; a second column, when
/// present, flags whether the pair is an edge at all.
pub fn pair_weights(graph: &Graph) -> Result<Vec<Option<f64>>> {
    let attrs = graph.edge_attrs().ok_or_else(|| Error::Usage("reasoning oracles need edge attributes".into()))?;
    if attrs.cols() == 0 {
        return Err(Error::Usage("edge attributes have no weight column".into()));
    }
    let n = graph.num_nodes();
    let mut w = vec![None; n * n];
    for (k, &(s, d)) in graph.edges().iter().enumerate() {
        let present = attrs.cols() < 2 || attrs.get(k, 1) != 0.0;
        if present {
            w[s * n + d] = Some(attrs.get(k, 0));
        }
    }
    Ok(w)
}

fn per_pair(graph: &Graph, f: impl Fn(usize, usize) -> f64) -> Result<Tensor> {
    let data = graph.edges().iter().map(|&(s, d)| f(s, d)).collect();
    Tensor::from_vec(graph.num_edges(), 1, data)
}

/// The pair's edge weight, 0 for non-edges.
pub fn oracle_edge_copy(graph: &Graph) -> Result<Tensor> {
    let n = graph.num_nodes();
    let w = pair_weights(graph)?;
    per_pair(graph, |s, d| w[s * n + d].unwrap_or(0.0))
}

/// All-pairs shortest-path distances by Floyd–Warshall. Unreachable pairs
/// are capped at `n × max_weight`.
pub fn oracle_shortest_path_capped(graph: &Graph, max_weight: f64) -> Result<Tensor> {
    let n = graph.num_nodes();
    let w = pair_weights(graph)?;
    let mut dist = vec![f64::INFINITY; n * n];
    for i in 0..n {
        dist[i * n + i] = 0.0;
    }
    for (k, v) in w.iter().enumerate() {
        if let Some(v) = *v {
            if v.is_nan() || v < 0.0 {
                return Err(Error::Value(format!("negative edge weight {v} on pair ({}, {})", k / n, k % n)));
            }
            dist[k] = dist[k].min(v);
        }
    }
    for k in 0..n {
        for i in 0..n {
            let dik = dist[i * n + k];
            if dik == f64::INFINITY {
                continue;
            }
            for j in 0..n {
                let through = dik + dist[k * n + j];
                if through < dist[i * n + j] {
                    dist[i * n + j] = through;
                }
            }
        }
    }
    let cap = n as f64 * max_weight;
    per_pair(graph, |s, d| dist[s * n + d].min(cap))
}

/// [`oracle_shortest_path_capped`] with the cap taken from the largest edge
/// weight of the instance (1 when it has no edges).
pub fn oracle_shortest_path(graph: &Graph) -> Result<Tensor> {
    let max = pair_weights(graph)?
        .into_iter()
        .flatten()
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
        .unwrap_or(1.0);
    oracle_shortest_path_capped(graph, max)
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// 1 when the two nodes share a connected component, else 0.
pub fn oracle_connected_components(graph: &Graph) -> Result<Tensor> {
    let n = graph.num_nodes();
    let w = pair_weights(graph)?;
    let mut parent: Vec<usize> = (0..n).collect();
    for (k, v) in w.iter().enumerate() {
        if v.is_some() {
            let (a, b) = (find(&mut parent, k / n), find(&mut parent, k % n));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    per_pair(graph, |s, d| if roots[s] == roots[d] { 1.0 } else { 0.0 })
}
