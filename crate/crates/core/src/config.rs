//! Run configuration: one TOML file plus command-line overrides.
//!
//! Precedence is flags > file > defaults. Unknown keys are rejected, and
//! every field is validated before any compute starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion::{InferenceMode, ScheduleSpec};
use crate::em::EmConfig;
use crate::gnn::{DenoiserConfig, TargetKind};
use crate::graph::HomophilySpec;
use crate::reasoning::{ReasoningDataConfig, Task};
use crate::train::OptimizerConfig;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Fully labeled training graphs, unseen test graphs.
    Inductive,
    /// One graph, part of whose labels are hidden.
    Transductive,
    /// Pair-target algorithmic reasoning.
    Reasoning,
}

/// Synthetic homophily data. Inductive runs partition each generated graph
/// into `parts` induced subgraphs; transductive runs keep one graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub homophily: HomophilySpec,
    #[serde(default = "one")]
    pub train_graphs: usize,
    #[serde(default = "one")]
    pub test_graphs: usize,
    #[serde(default = "one")]
    pub parts: usize,
}

fn one() -> usize {
    1
}
fn d_label_fraction() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset directory (with `manifest.json`) or a single graph file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
    /// Transductive runs reveal each node's label with this probability.
    #[serde(default = "d_label_fraction")]
    pub label_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { path: None, generator: None, label_fraction: d_label_fraction() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceConfig {
    #[serde(default)]
    pub mode: InferenceMode,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "one")]
    pub samples: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self { mode: InferenceMode::Deterministic, lambda: 0.0, samples: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReasoningConfig {
    pub task: Task,
    #[serde(default)]
    pub data: ReasoningDataConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskKind,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; not part of the configuration hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default = "yes")]
    pub unweighted_mse: bool,
    #[serde(default)]
    pub data: DataConfig,
    pub model: DenoiserConfig,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub optim: OptimizerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub em: Option<EmConfig>,
    #[serde(default)]
    pub inference: InferenceConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<ReasoningConfig>,
}

fn yes() -> bool {
    true
}

/// Values given on the command line; each replaces its file/default value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub lambda: Option<f64>,
    pub samples: Option<usize>,
    pub steps: Option<usize>,
    pub unweighted_mse: Option<bool>,
    pub mode: Option<InferenceMode>,
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("{}: {}", origin.display(), e)))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, path)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = &o.out {
            self.out = Some(p.clone());
        }
        if let Some(l) = o.lambda {
            self.inference.lambda = l;
        }
        if let Some(n) = o.samples {
            self.inference.samples = n;
        }
        if let Some(t) = o.steps {
            self.schedule.steps = t;
        }
        if let Some(u) = o.unweighted_mse {
            self.unweighted_mse = u;
        }
        if let Some(m) = o.mode {
            self.inference.mode = m;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.optim.validate()?;
        self.schedule.build()?;
        let inf = &self.inference;
        if !(inf.lambda >= 0.0 && inf.lambda.is_finite()) {
            return Err(Error::Config(format!("inference.lambda must be non-negative, got {}", inf.lambda)));
        }
        if inf.samples == 0 {
            return Err(Error::Config("inference.samples must be at least 1".into()));
        }
        let want = match self.task {
            TaskKind::Reasoning => TargetKind::Edge,
            _ => TargetKind::Node,
        };
        if self.model.target_kind != want {
            return Err(Error::Config(format!("task {:?} needs model.target_kind = {:?}", self.task, want)));
        }
        match self.task {
            TaskKind::Reasoning => {
                let r = self
                    .reasoning
                    .as_ref()
                    .ok_or_else(|| Error::Config("reasoning runs need a [reasoning] section".into()))?;
                r.data.validate()?;
            }
            TaskKind::Inductive | TaskKind::Transductive => {
                if self.data.path.is_some() == self.data.generator.is_some() {
                    return Err(Error::Config("set exactly one of data.path and data.generator".into()));
                }
                if let Some(g) = &self.data.generator {
                    g.homophily.validate().map_err(|e| Error::Config(e.to_string()))?;
                    if g.train_graphs == 0 || g.test_graphs == 0 || g.parts == 0 {
                        return Err(Error::Config("generator counts must be at least 1".into()));
                    }
                    if g.parts > g.homophily.num_nodes {
                        return Err(Error::Config("generator.parts exceeds num_nodes".into()));
                    }
                }
                let f = self.data.label_fraction;
                if !(f > 0.0 && f < 1.0) {
                    return Err(Error::Config(format!("data.label_fraction must lie in (0, 1), got {f}")));
                }
                if self.task == TaskKind::Transductive {
                    self.em
                        .as_ref()
                        .ok_or_else(|| Error::Config("transductive runs need an [em] section".into()))?
                        .validate()
                        .map_err(|e| Error::Config(e.to_string()))?;
                }
            }
        }
        Ok(())
    }

    /// Canonical TOML text of everything that determines results.
    pub fn canonical_text(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        toml::to_string(&c).expect("run configuration serializes")
    }

    /// Hex SHA-256 of [`Self::canonical_text`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out.as_deref().ok_or_else(|| Error::Config("no output directory (set `out` or pass --out)".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
task = "inductive"
[model]
num_layers = 2
hidden_dim = 16
[data.generator]
parts = 10
[data.generator.homophily]
num_nodes = 50
num_classes = 2
p_intra = 0.3
p_inter = 0.01
feature_noise = 1.0
"#;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::from_toml(text, Path::new("test.toml"))
    }

    #[test]
    fn minimal_file_with_defaults() {
        let c = parse(MINIMAL).unwrap();
        c.validate().unwrap();
        assert_eq!(c.schedule.offset, 0.008);
        assert_eq!(c.model.time_embed_dim, 128);
        assert!(c.unweighted_mse);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = parse(&format!("{MINIMAL}\n[optim]\nlearning_rate = 0.1\n")).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("learning_rate"));
    }

    #[test]
    fn flags_override_file() {
        let mut c = parse(&format!("seed = 3\n{MINIMAL}")).unwrap();
        c.apply(&Overrides { seed: Some(9), steps: Some(7), unweighted_mse: Some(false), ..Default::default() });
        assert_eq!((c.seed, c.schedule.steps, c.unweighted_mse), (9, 7, false));
    }

    #[test]
    fn validation_errors() {
        let mut c = parse(MINIMAL).unwrap();
        c.inference.samples = 0;
        assert!(c.validate().is_err());
        let mut c = parse(MINIMAL).unwrap();
        c.task = TaskKind::Transductive;
        assert!(c.validate().is_err());
        let mut c = parse(MINIMAL).unwrap();
        c.data.path = Some("x".into());
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_ignores_output_directory() {
        let a = parse(MINIMAL).unwrap();
        let mut b = a.clone();
        b.out = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
