//! Input embedding, the graph transformer layer and its edge-feature variant.

mod embed;
mod layer;

pub use embed::Embedding;
pub use layer::{FeedForwardBlock, GtLayer, LayerOutput, Linear};
pub use crate::tensor::NormKind;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphBatch};
use crate::tensor::{Bound, Checkpoint, Mode, NamedArray, ParamStore, Tape, Tensor, TensorError, Var};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("{what}: expected width {expected}, got {got}")]
    Width {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{0}")]
    PeInput(String),
    #[error("the edge-feature layer needs edge features but the data has d_e = 0; use the plain layer (use_edge_features = false)")]
    NoEdgeFeatures,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Which positional encoding is injected before the first layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PeKind {
    #[default]
    None,
    Laplacian { k: usize },
    Wl { max_roles: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    #[default]
    Mean,
}

fn default_layers() -> usize {
    10
}
fn default_heads() -> usize {
    8
}
fn default_hidden() -> usize {
    64
}
fn default_clamp() -> f64 {
    5.0
}
fn default_norm() -> NormKind {
    NormKind::BatchNorm
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_layers")]
    pub num_layers: usize,
    #[serde(default = "default_heads")]
    pub num_heads: usize,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    pub node_feature_dim: usize,
    #[serde(default)]
    pub edge_feature_dim: usize,
    #[serde(default)]
    pub pe_kind: PeKind,
    #[serde(default = "default_norm")]
    pub norm_kind: NormKind,
    #[serde(default)]
    pub use_edge_features: bool,
    /// Attention scores are clamped to `[-clamp_bound, clamp_bound]` before
    /// the softmax; `f64::INFINITY` disables clamping.
    #[serde(default = "default_clamp")]
    pub clamp_bound: f64,
    #[serde(default)]
    pub add_self_loops: bool,
    #[serde(default)]
    pub readout: Readout,
}

impl ModelConfig {
    /// Defaults for everything except the input widths.
    pub fn new(node_feature_dim: usize, edge_feature_dim: usize) -> Self {
        ModelConfig {
            num_layers: default_layers(),
            num_heads: default_heads(),
            hidden_dim: default_hidden(),
            node_feature_dim,
            edge_feature_dim,
            pe_kind: PeKind::None,
            norm_kind: default_norm(),
            use_edge_features: false,
            clamp_bound: default_clamp(),
            add_self_loops: false,
            readout: Readout::Mean,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads.max(1)
    }

    /// Every violated constraint, in field order.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.num_heads == 0 {
            out.push("num_heads must be at least 1".to_string());
        } else if self.hidden_dim % self.num_heads != 0 {
            out.push(format!(
                "hidden_dim {} is not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            ));
        }
        if self.hidden_dim == 0 {
            out.push("hidden_dim must be at least 1".to_string());
        }
        match self.pe_kind {
            PeKind::Laplacian { k: 0 } => out.push("laplacian pe needs k >= 1".to_string()),
            PeKind::Wl { max_roles: 0 } => out.push("wl pe needs max_roles >= 1".to_string()),
            _ => {}
        }
        if !(self.clamp_bound > 0.0) {
            out.push(format!("clamp_bound must be positive, got {}", self.clamp_bound));
        }
        if self.use_edge_features && self.edge_feature_dim == 0 {
            out.push("use_edge_features requires edge_feature_dim > 0".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Config(p.join("; ")))
        }
    }
}

/// Positional input matching [`PeKind`]: an `n x k` matrix or one role id per
/// node.
#[derive(Clone, Debug, PartialEq)]
pub enum PeInput {
    None,
    Laplacian(Tensor),
    Roles(Vec<usize>),
}

/// Final representations and the per-layer attention weights of one forward
/// pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// `n x d`.
    pub nodes: Var,
    /// `m x d` in edge-id order of the graph that was attended over; present
    /// in edge mode.
    pub edges: Option<Var>,
    /// One `m x H` matrix per layer in CSR slot order: row `s` holds the
    /// weights of slot `s` (an edge `src -> dst`) for every head.
    pub attention: Vec<Var>,
    /// The graph attention ran on (the input with self-loops when enabled).
    pub graph: Graph,
}

/// Uniform `±1/sqrt(fan_in)` weights of shape `out x fan_in`.
pub(crate) fn init_weight<R: Rng + ?Sized>(rng: &mut R, out: usize, fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let data = (0..out * fan_in).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::matrix(out, fan_in, data).expect("init shape")
}

/// The full stack: embedding followed by `num_layers` transformer layers.
#[derive(Clone, Debug)]
pub struct GraphTransformer {
    pub config: ModelConfig,
    pub embedding: Embedding,
    pub layers: Vec<GtLayer>,
}

impl GraphTransformer {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, store: &mut ParamStore, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        let embedding = Embedding::new(&config, store, rng);
        let layers = (0..config.num_layers)
            .map(|l| GtLayer::new(&config, &format!("layers.{l}"), store, rng))
            .collect();
        Ok(GraphTransformer {
            config,
            embedding,
            layers,
        })
    }

    /// Embedding, then every layer. Positional input enters only before the
    /// first layer.
    pub fn forward(
        &mut self,
        tape: &mut Tape,
        params: &Bound,
        batch: &GraphBatch,
        pe: &PeInput,
        mode: Mode,
    ) -> Result<ForwardOutput, ModelError> {
        let graph = if self.config.add_self_loops {
            batch.graph().with_self_loops()
        } else {
            batch.graph().clone()
        };
        let (mut h, e) = self.embedding.forward(tape, params, &graph, pe, &self.config)?;
        let mut attention = Vec::with_capacity(self.layers.len());
        let edges = if self.config.use_edge_features {
            // the edge stream is carried in slot order and restored at the end
            let e = e.ok_or(ModelError::NoEdgeFeatures)?;
            let mut e_slots = tape.gather_rows(e, graph.edge_ids())?;
            for layer in &mut self.layers {
                let out = layer.forward_edge(tape, params, &graph, h, e_slots, &self.config, mode)?;
                h = out.nodes;
                e_slots = out.edges.expect("edge layer returns edges");
                attention.push(out.attention);
            }
            let mut slot_of_edge = vec![0; graph.num_edges()];
            for (slot, &id) in graph.edge_ids().iter().enumerate() {
                slot_of_edge[id] = slot;
            }
            Some(tape.gather_rows(e_slots, &slot_of_edge)?)
        } else {
            for layer in &mut self.layers {
                let out = layer.forward(tape, params, &graph, h, &self.config, mode)?;
                h = out.nodes;
                attention.push(out.attention);
            }
            None
        };
        Ok(ForwardOutput {
            nodes: h,
            edges,
            attention,
            graph,
        })
    }

    /// Normalization running statistics of every layer.
    pub fn buffers(&self) -> Vec<NamedArray> {
        self.layers.iter().flat_map(GtLayer::buffers).collect()
    }

    pub fn load_buffers(&mut self, buffers: &[NamedArray]) -> Result<(), ModelError> {
        for layer in &mut self.layers {
            layer.load_buffers(buffers)?;
        }
        Ok(())
    }

    /// Parameters, buffers and the config as one record.
    pub fn to_checkpoint(&self, store: &ParamStore) -> Checkpoint {
        Checkpoint {
            config: Some(serde_json::to_value(&self.config).expect("config serializes")),
            params: store.to_named(),
            buffers: self.buffers(),
        }
    }

    /// Rebuilds the model from the embedded config and loads every array,
    /// rejecting missing, extra or mis-shaped entries.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, ParamStore), ModelError> {
        let raw = ck
            .config
            .clone()
            .ok_or_else(|| ModelError::Checkpoint("no model config recorded".into()))?;
        let config: ModelConfig =
            serde_json::from_value(raw).map_err(|e| ModelError::Checkpoint(format!("config: {e}")))?;
        let mut store = ParamStore::new();
        // values are overwritten below; the generator only fixes shapes
        let mut rng = rand::rngs::mock::StepRng::new(0, 1);
        let mut model = GraphTransformer::new(config, &mut store, &mut rng)?;
        store.load_named(&ck.params)?;
        model.load_buffers(&ck.buffers)?;
        Ok((model, store))
    }
}
