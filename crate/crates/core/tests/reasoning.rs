use std::collections::VecDeque;

use graphdiff::graph::{generate_reasoning_graph, Graph, ReasoningGraphSpec};
use graphdiff::reasoning::{
    build_reasoning_dataset, eval_reasoning, oracle_connected_components, oracle_edge_copy, oracle_shortest_path,
    pair_index, pair_weights, reasoning_instance, ConstantPredictor, PairPredictor, ReasoningDataConfig, Task,
};
use graphdiff::rng::SeededRng;
use graphdiff::{Result, Tensor};

/// Weights on a dyadic grid so every path sum is exact in floating point.
fn dyadic_instance(n: usize, p: f64, rng: &mut SeededRng) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.uniform() < p {
                edges.push((i, j, (1 + rng.below(64)) as f64 / 64.0));
            }
        }
    }
    reasoning_instance(n, &edges).unwrap()
}

fn dijkstra(n: usize, w: &[Option<f64>], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[source] = 0.0;
    for _ in 0..n {
        let Some(u) = (0..n).filter(|&v| !done[v] && dist[v].is_finite()).min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
        else {
            break;
        };
        done[u] = true;
        for v in 0..n {
            if let Some(wt) = w[u * n + v] {
                if dist[u] + wt < dist[v] {
                    dist[v] = dist[u] + wt;
                }
            }
        }
    }
    dist
}

fn cap_of(w: &[Option<f64>], n: usize) -> f64 {
    n as f64 * w.iter().flatten().fold(None, |m: Option<f64>, &v| Some(m.map_or(v, |m| m.max(v)))).unwrap_or(1.0)
}

#[test]
fn floyd_warshall_agrees_with_dijkstra() {
    let mut rng = SeededRng::new(1);
    for trial in 0..200 {
        let n = 8;
        let g = dyadic_instance(n, 0.3, &mut rng);
        let w = pair_weights(&g).unwrap();
        let cap = cap_of(&w, n);
        let fw = oracle_shortest_path(&g).unwrap();
        for s in 0..n {
            let d = dijkstra(n, &w, s);
            for t in (0..n).filter(|&t| t != s) {
                assert_eq!(fw.get(pair_index(n, s, t), 0), d[t].min(cap), "trial {trial}: ({s}, {t})");
            }
        }
    }
}

#[test]
fn floyd_warshall_agrees_with_dijkstra_on_generated_weights() {
    for seed in 0..200 {
        let spec = ReasoningGraphSpec { num_nodes: 8, edge_prob: 0.35, weight_range: (0.1, 1.0) };
        let g = generate_reasoning_graph(&spec, seed).unwrap();
        let w = pair_weights(&g).unwrap();
        let cap = cap_of(&w, 8);
        let fw = oracle_shortest_path(&g).unwrap();
        for s in 0..8 {
            let d = dijkstra(8, &w, s);
            for t in (0..8).filter(|&t| t != s) {
                let (a, b) = (fw.get(pair_index(8, s, t), 0), d[t].min(cap));
                assert!((a - b).abs() <= 1e-12 * b.max(1.0), "seed {seed}: ({s}, {t}) {a} vs {b}");
            }
        }
    }
}

fn bfs_components(n: usize, w: &[Option<f64>]) -> Vec<usize> {
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        label[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if w[u * n + v].is_some() && label[v] == usize::MAX {
                    label[v] = next;
                    queue.push_back(v);
                }
            }
        }
        next += 1;
    }
    label
}

#[test]
fn components_form_an_equivalence_relation() {
    let mut rng = SeededRng::new(2);
    for trial in 0..200 {
        let n = 2 + rng.below(10);
        let g = dyadic_instance(n, 1.5 / n as f64, &mut rng);
        let t = oracle_connected_components(&g).unwrap();
        let rel = |i: usize, j: usize| i == j || t.get(pair_index(n, i, j), 0) == 1.0;
        let labels = bfs_components(n, &pair_weights(&g).unwrap());
        for i in 0..n {
            for j in 0..n {
                assert_eq!(rel(i, j), rel(j, i), "trial {trial}: symmetry");
                assert_eq!(rel(i, j), labels[i] == labels[j], "trial {trial}: BFS labels");
                for k in 0..n {
                    if rel(i, j) && rel(j, k) {
                        assert!(rel(i, k), "trial {trial}: transitivity");
                    }
                }
            }
        }
    }
}

#[test]
fn hand_examples() {
    let path = reasoning_instance(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
    assert_eq!(oracle_shortest_path(&path).unwrap().get(pair_index(3, 0, 2), 0), 2.0);
    let tri = reasoning_instance(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)]).unwrap();
    assert_eq!(oracle_shortest_path(&tri).unwrap().get(pair_index(3, 0, 2), 0), 2.0);

    let one = reasoning_instance(4, &[(0, 1, 0.7)]).unwrap();
    let copy = oracle_edge_copy(&one).unwrap();
    assert_eq!(copy.get(pair_index(4, 0, 1), 0), 0.7);
    assert_eq!(copy.get(pair_index(4, 1, 0), 0), 0.7);
    assert_eq!(copy.data().iter().filter(|&&v| v != 0.0).count(), 2);
    let cc = oracle_connected_components(&one).unwrap();
    assert_eq!(cc.get(pair_index(4, 0, 1), 0), 1.0);
    assert_eq!(cc.get(pair_index(4, 2, 3), 0), 0.0);
    assert_eq!(cc.get(pair_index(4, 0, 2), 0), 0.0);

    let empty = reasoning_instance(5, &[]).unwrap();
    assert!(oracle_edge_copy(&empty).unwrap().data().iter().all(|&v| v == 0.0));
    let complete: Vec<(usize, usize, f64)> = (0..5).flat_map(|i| ((i + 1)..5).map(move |j| (i, j, 0.5))).collect();
    let complete = reasoning_instance(5, &complete).unwrap();
    assert!(oracle_connected_components(&complete).unwrap().data().iter().all(|&v| v == 1.0));
}

fn small_config() -> ReasoningDataConfig {
    ReasoningDataConfig { train_sizes: (2..=10).collect(), train_per_size: 5, test_count: 7, ..Default::default() }
}

#[test]
fn dataset_counts_labels_and_determinism() {
    for task in Task::ALL {
        let cfg = small_config();
        let data = build_reasoning_dataset(task, &cfg, 3).unwrap();
        assert_eq!(data.train.len(), 9 * 5);
        for size in 2..=10 {
            assert_eq!(data.train.iter().filter(|g| g.num_nodes() == size).count(), 5);
        }
        assert_eq!(data.test.len(), 7);
        assert!(data.test.iter().all(|g| g.num_nodes() == 10));
        assert_eq!(data.test_large.len(), 7);
        assert!(data.test_large.iter().all(|g| g.num_nodes() == 15));
        for g in data.train.iter().chain(&data.test).chain(&data.test_large) {
            assert_eq!(g.edge_targets().unwrap(), &task.oracle(g).unwrap());
        }
        assert_eq!(build_reasoning_dataset(task, &cfg, 3).unwrap(), data);
    }
}

#[test]
fn shortest_paths_obey_the_triangle_inequality() {
    let data = build_reasoning_dataset(Task::ShortestPath, &small_config(), 4).unwrap();
    for g in data.train.iter().chain(&data.test).chain(&data.test_large) {
        let n = g.num_nodes();
        let t = g.edge_targets().unwrap();
        let d = |i: usize, j: usize| if i == j { 0.0 } else { t.get(pair_index(n, i, j), 0) };
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    assert!(d(i, k) <= d(i, j) + d(j, k) + 1e-12);
                }
            }
        }
    }
}

struct Exact;

impl PairPredictor for Exact {
    fn predict(&self, graphs: &[&Graph], _rng: &mut SeededRng) -> Result<Vec<Tensor>> {
        Ok(graphs.iter().map(|g| g.edge_targets().unwrap().clone()).collect())
    }
}

#[test]
fn evaluation_of_reference_predictors() {
    let mut rng = SeededRng::new(0);
    let data = build_reasoning_dataset(Task::ShortestPath, &small_config(), 5).unwrap();
    assert_eq!(eval_reasoning(&Exact, &data.test, &mut rng).unwrap(), 0.0);

    let zero = ConstantPredictor { value: 0.0 };
    let (mut sq, mut count) = (0.0, 0);
    for g in &data.test {
        for v in g.edge_targets().unwrap().data() {
            sq += v * v;
            count += 1;
        }
    }
    let mse = eval_reasoning(&zero, &data.test, &mut rng).unwrap();
    assert!((mse - sq / count as f64).abs() < 1e-12);

    let weightless = reasoning_instance(4, &[(0, 1, 0.0), (2, 3, 0.0)]).unwrap();
    let targets = oracle_edge_copy(&weightless).unwrap();
    let weightless = weightless.with_edge_targets(targets).unwrap();
    assert_eq!(eval_reasoning(&zero, &[weightless], &mut rng).unwrap(), 0.0);
}
