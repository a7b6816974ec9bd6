use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backbone {
    /// Symmetrically normalized adjacency with self-connections.
    Gcn,
    /// Row-normalized adjacency with self-connections; the layer combines
    /// `[h_i ∥ a_i]` linearly.
    MeanAggregate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Elu,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Elu => tape.elu(x),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Node,
    Edge,
}

/// How an edge-denoiser node combines its incoming messages.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeAggregation {
    Sum,
    /// Sum scaled by the inverse in-degree; keeps node states on the same
    /// scale across graph sizes.
    #[default]
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserConfig {
    #[serde(default = "default_backbone")]
    pub backbone: Backbone,
    pub num_layers: usize,
    pub hidden_dim: usize,
    #[serde(default = "default_time_embed_dim")]
    pub time_embed_dim: usize,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_head_layers")]
    pub head_layers: usize,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default = "default_target_kind")]
    pub target_kind: TargetKind,
    #[serde(default)]
    pub edge_aggregation: EdgeAggregation,
}

fn default_backbone() -> Backbone {
    Backbone::Gcn
}
fn default_time_embed_dim() -> usize {
    128
}
fn default_activation() -> Activation {
    Activation::Relu
}
fn default_head_layers() -> usize {
    2
}
fn default_target_kind() -> TargetKind {
    TargetKind::Node
}

impl DenoiserConfig {
    pub fn node(num_layers: usize, hidden_dim: usize) -> Self {
        Self {
            backbone: Backbone::Gcn,
            num_layers,
            hidden_dim,
            time_embed_dim: 128,
            activation: Activation::Relu,
            head_layers: 2,
            dropout: 0.0,
            target_kind: TargetKind::Node,
            edge_aggregation: EdgeAggregation::Mean,
        }
    }

    pub fn edge(num_layers: usize, hidden_dim: usize) -> Self {
        Self { target_kind: TargetKind::Edge, ..Self::node(num_layers, hidden_dim) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 {
            return Err(Error::Config("num_layers must be >= 1".into()));
        }
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be >= 1".into()));
        }
        if self.time_embed_dim == 0 || !self.time_embed_dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "time_embed_dim must be even and positive, got {}",
                self.time_embed_dim
            )));
        }
        if self.head_layers == 0 {
            return Err(Error::Config("head_layers must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }
}
