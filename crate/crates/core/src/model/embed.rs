use rand::Rng;

use super::{init_weight, ModelConfig, ModelError, PeInput, PeKind};
use crate::graph::Graph;
use crate::tensor::{Bound, ParamId, ParamStore, Tape, Tensor, Var};

/// Input projections for nodes, edges and the positional encoding.
#[derive(Clone, Debug)]
pub struct Embedding {
    /// `d x d_n`.
    pub node_weight: ParamId,
    pub node_bias: ParamId,
    /// `d x d_e`, edge mode only.
    pub edge_weight: Option<ParamId>,
    pub edge_bias: Option<ParamId>,
    /// `d x k` and its bias for Laplacian encodings.
    pub pe_weight: Option<ParamId>,
    pub pe_bias: Option<ParamId>,
    /// `max_roles x d` lookup table for WL roles.
    pub role_table: Option<ParamId>,
}

impl Embedding {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, store: &mut ParamStore, rng: &mut R) -> Self {
        let d = cfg.hidden_dim;
        let node_weight = store.add("embed.node.weight", init_weight(rng, d, cfg.node_feature_dim));
        let node_bias = store.add("embed.node.bias", Tensor::zeros(&[d]));
        let (edge_weight, edge_bias) = if cfg.use_edge_features {
            (
                Some(store.add("embed.edge.weight", init_weight(rng, d, cfg.edge_feature_dim))),
                Some(store.add("embed.edge.bias", Tensor::zeros(&[d]))),
            )
        } else {
            (None, None)
        };
        let (mut pe_weight, mut pe_bias, mut role_table) = (None, None, None);
        match cfg.pe_kind {
            PeKind::None => {}
            PeKind::Laplacian { k } => {
                pe_weight = Some(store.add("embed.pe.weight", init_weight(rng, d, k)));
                pe_bias = Some(store.add("embed.pe.bias", Tensor::zeros(&[d])));
            }
            PeKind::Wl { max_roles } => {
                let data = (0..max_roles * d).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                role_table = Some(store.add("embed.roles", Tensor::matrix(max_roles, d, data).expect("role table")));
            }
        }
        Embedding {
            node_weight,
            node_bias,
            edge_weight,
            edge_bias,
            pe_weight,
            pe_bias,
            role_table,
        }
    }

    /// `h0 = A x + a (+ C pe + c | + roles[id])` and, in edge mode,
    /// `e0 = B y + b` in edge-id order.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &Bound,
        graph: &Graph,
        pe: &PeInput,
        cfg: &ModelConfig,
    ) -> Result<(Var, Option<Var>), ModelError> {
        let n = graph.num_nodes();
        if graph.node_feature_dim() != cfg.node_feature_dim {
            return Err(ModelError::Width {
                what: "node features",
                expected: cfg.node_feature_dim,
                got: graph.node_feature_dim(),
            });
        }
        let x = tape.constant(graph.node_features().clone());
        let mut h = tape.linear(x, params.var(self.node_weight), params.var(self.node_bias))?;

        match (cfg.pe_kind, pe) {
            (PeKind::None, PeInput::None) => {}
            (PeKind::Laplacian { k }, PeInput::Laplacian(enc)) => {
                if enc.shape() != [n, k] {
                    return Err(ModelError::PeInput(format!(
                        "laplacian encoding has shape {:?}, expected [{n}, {k}]",
                        enc.shape()
                    )));
                }
                let (w, b) = (self.pe_weight.expect("pe weight"), self.pe_bias.expect("pe bias"));
                let lam = tape.constant(enc.clone());
                let proj = tape.linear(lam, params.var(w), params.var(b))?;
                h = tape.add(h, proj)?;
            }
            (PeKind::Wl { max_roles }, PeInput::Roles(ids)) => {
                if ids.len() != n {
                    return Err(ModelError::PeInput(format!("{} role ids for {n} nodes", ids.len())));
                }
                if let Some(&bad) = ids.iter().find(|&&r| r >= max_roles) {
                    return Err(ModelError::PeInput(format!("role id {bad} exceeds max_roles {max_roles}")));
                }
                let table = params.var(self.role_table.expect("role table"));
                let rows = tape.gather_rows(table, ids)?;
                h = tape.add(h, rows)?;
            }
            (kind, _) => {
                return Err(ModelError::PeInput(format!("positional input does not match pe_kind {kind:?}")));
            }
        }

        let e = if cfg.use_edge_features {
            if graph.edge_feature_dim() == 0 {
                return Err(ModelError::NoEdgeFeatures);
            }
            if graph.edge_feature_dim() != cfg.edge_feature_dim {
                return Err(ModelError::Width {
                    what: "edge features",
                    expected: cfg.edge_feature_dim,
                    got: graph.edge_feature_dim(),
                });
            }
            let y = tape.constant(graph.edge_features().clone());
            let (w, b) = (self.edge_weight.expect("edge weight"), self.edge_bias.expect("edge bias"));
            Some(tape.linear(y, params.var(w), params.var(b))?)
        } else {
            None
        };
        Ok((h, e))
    }
}
