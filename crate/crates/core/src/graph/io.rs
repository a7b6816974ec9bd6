//! JSON graph files and dataset directories.
//!
//! A graph file holds one object:
//!
//! ```json
//! {"num_nodes": 2, "edges": [[0, 1], [1, 0]], "x": [[1.0], [0.0]], "y": [0, null]}
//! ```
//!
//! with optional `edge_x` and `edge_y` (rows aligned with `edges`),
//! `num_classes` and `split`. A dataset is a directory holding graph files
//! plus `manifest.json` mapping each file to its split.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DatasetSplit, Graph};
use crate::{Error, Result, Tensor};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    num_nodes: usize,
    edges: Vec<[usize; 2]>,
    x: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edge_x: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y: Option<Vec<Option<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edge_y: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    num_classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub file: String,
    pub split: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub graphs: Vec<ManifestEntry>,
}

fn rows_to_tensor(rows: &[Vec<f64>], field: &str, path: &Path) -> Result<Tensor> {
    let cols = rows.first().map_or(0, Vec::len);
    Tensor::from_rows(rows, cols)
        .map_err(|e| Error::Parse { path: path.to_owned(), detail: format!("field `{field}`: ragged rows ({e})") })
}

fn tensor_to_rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

/// Parses a graph from JSON text; `origin` names the source in errors.
pub fn graph_from_json(text: &str, origin: &Path) -> Result<Graph> {
    let file: GraphFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_owned(),
        detail: format!("line {} column {}: {e}", e.line(), e.column()),
    })?;
    let parse = |detail: String| Error::Parse { path: origin.to_owned(), detail };
    if file.x.len() != file.num_nodes {
        return Err(parse(format!("field `x`: {} rows for num_nodes = {}", file.x.len(), file.num_nodes)));
    }
    for (k, e) in file.edges.iter().enumerate() {
        if e[0] >= file.num_nodes || e[1] >= file.num_nodes {
            return Err(parse(format!(
                "field `edges`: edge {k} [{}, {}] references a node outside 0..{}",
                e[0], e[1], file.num_nodes
            )));
        }
    }
    let x = rows_to_tensor(&file.x, "x", origin)?;
    let edges = file.edges.iter().map(|e| (e[0], e[1])).collect();
    let mut g = Graph::new(file.num_nodes, edges, x).map_err(|e| parse(e.to_string()))?;
    if let Some(ex) = &file.edge_x {
        let t = rows_to_tensor(ex, "edge_x", origin)?;
        g = g.with_edge_attrs(t).map_err(|e| parse(format!("field `edge_x`: {e}")))?;
    }
    if let Some(ey) = &file.edge_y {
        let t = rows_to_tensor(ey, "edge_y", origin)?;
        g = g.with_edge_targets(t).map_err(|e| parse(format!("field `edge_y`: {e}")))?;
    }
    if let Some(y) = file.y {
        let inferred = y.iter().flatten().max().map_or(0, |&m| m + 1);
        let classes = file.num_classes.unwrap_or(inferred);
        g = g.with_labels(y, classes).map_err(|e| parse(format!("field `y`: {e}")))?;
    }
    Ok(g.with_split(file.split))
}

/// Serializes a graph in the file schema.
pub fn graph_to_json(graph: &Graph) -> String {
    let file = GraphFile {
        num_nodes: graph.num_nodes(),
        edges: graph.edges().iter().map(|&(s, d)| [s, d]).collect(),
        x: tensor_to_rows(graph.node_attrs()),
        edge_x: graph.edge_attrs().map(tensor_to_rows),
        y: graph.labels().map(<[_]>::to_vec),
        edge_y: graph.edge_targets().map(tensor_to_rows),
        num_classes: graph.labels().map(|_| graph.num_classes()),
        split: graph.split().map(str::to_owned),
    };
    serde_json::to_string(&file).expect("graph files always serialize")
}

pub fn load_graph_json(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    graph_from_json(&text, path)
}

pub fn save_graph_json(graph: &Graph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, graph_to_json(graph)).map_err(|e| Error::io(path, e))
}

/// Loads every graph listed in `dir/manifest.json` into its split.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<DatasetSplit> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: manifest_path.clone(),
        detail: format!("line {} column {}: {e}", e.line(), e.column()),
    })?;
    let mut split = DatasetSplit::default();
    for entry in &manifest.graphs {
        let g = load_graph_json(dir.join(&entry.file))?;
        match entry.split.as_str() {
            "train" => split.train.push(g),
            "validation" | "val" => split.validation.push(g),
            "test" | "test_same" => split.test.push(g),
            "test_large" => split.test_large.push(g),
            other => {
                return Err(Error::Parse {
                    path: manifest_path,
                    detail: format!("unknown split `{other}` for {}", entry.file),
                })
            }
        }
    }
    Ok(split)
}

/// Writes one file per graph plus the manifest. Returns the manifest path.
pub fn save_dataset(split: &DatasetSplit, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = DatasetManifest::default();
    for (name, graphs) in [
        ("train", &split.train),
        ("validation", &split.validation),
        ("test", &split.test),
        ("test_large", &split.test_large),
    ] {
        for (i, g) in graphs.iter().enumerate() {
            let file = format!("{name}_{i:05}.json");
            save_graph_json(g, dir.join(&file))?;
            manifest.graphs.push(ManifestEntry { file, split: name.to_owned() });
        }
    }
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
