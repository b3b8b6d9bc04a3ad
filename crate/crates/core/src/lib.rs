//! Graph transformer with sparse neighborhood attention.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: CSR graphs, batching, synthetic datasets and the JSON graph format.
//! - [`pe`]: normalized Laplacian, a cyclic Jacobi eigensolver, Laplacian and
//!   Weisfeiler-Lehman positional encodings.
//! - [`tensor`]: dense tensors, a recording tape with reverse-mode gradients,
//!   normalization layers and a finite-difference gradient checker.
//! - [`model`]: input embedding, the graph transformer layer and its edge-feature
//!   variant.
//! - [`train`]: task heads, losses, Adam, reduce-on-plateau scheduling and
//!   multi-seed experiments.
//! - [`config`]: the flat `key = value` experiment configuration.

pub mod config;
pub mod error;
pub mod graph;
pub mod model;
pub mod pe;
pub mod tensor;
pub mod train;

pub use config::{DatasetSpec, ExperimentConfig, TaskKind};
pub use error::{Error, Result};
pub use graph::{batch_graphs, build_graph, Graph, GraphBatch, SbmParams};
pub use model::{GraphTransformer, ModelConfig, NormKind, PeKind};
pub use pe::{lap_pe, wl_roles, LapPE, SpectralDecomposition, WlRoles};
pub use tensor::{ParamStore, Tape, Tensor, Var};
pub use train::{run_experiment, RunReport};
