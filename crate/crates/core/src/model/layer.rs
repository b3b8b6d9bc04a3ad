use rand::Rng;

use super::{init_weight, ModelConfig, ModelError};
use crate::graph::Graph;
use crate::tensor::{Bound, Mode, NamedArray, NormLayer, ParamId, ParamStore, Tape, Tensor, Var};

/// Weight and bias of one affine map.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    /// Registers `{name}.weight` (`out x fan_in`) and `{name}.bias`.
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, out: usize, fan_in: usize, rng: &mut R) -> Self {
        Linear {
            weight: store.add(format!("{name}.weight"), init_weight(rng, out, fan_in)),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[out])),
        }
    }

    pub fn apply(&self, tape: &mut Tape, params: &Bound, x: Var) -> Result<Var, ModelError> {
        Ok(tape.linear(x, params.var(self.weight), params.var(self.bias))?)
    }
}

/// Residual + norm, FFN, residual + norm: the post-attention half of a layer.
#[derive(Clone, Debug)]
pub struct FeedForwardBlock {
    pub norm1: NormLayer,
    /// `2d x d`.
    pub expand: Linear,
    /// `d x 2d`.
    pub contract: Linear,
    pub norm2: NormLayer,
}

impl FeedForwardBlock {
    fn new<R: Rng + ?Sized>(cfg: &ModelConfig, name: &str, store: &mut ParamStore, rng: &mut R) -> Self {
        let d = cfg.hidden_dim;
        FeedForwardBlock {
            norm1: NormLayer::new(cfg.norm_kind, &format!("{name}.norm1"), d, store),
            expand: Linear::new(store, &format!("{name}.ffn1"), 2 * d, d, rng),
            contract: Linear::new(store, &format!("{name}.ffn2"), d, 2 * d, rng),
            norm2: NormLayer::new(cfg.norm_kind, &format!("{name}.norm2"), d, store),
        }
    }

    fn forward(
        &mut self,
        tape: &mut Tape,
        params: &Bound,
        input: Var,
        update: Var,
        mode: Mode,
    ) -> Result<Var, ModelError> {
        let residual = tape.add(input, update)?;
        let h1 = self.norm1.forward(tape, residual, params, mode)?;
        let wide = self.expand.apply(tape, params, h1)?;
        let act = tape.relu(wide);
        let ffn = self.contract.apply(tape, params, act)?;
        let residual = tape.add(h1, ffn)?;
        Ok(self.norm2.forward(tape, residual, params, mode)?)
    }

    fn buffers(&self) -> Vec<NamedArray> {
        let mut b = self.norm1.buffers();
        b.extend(self.norm2.buffers());
        b
    }

    fn load_buffers(&mut self, buffers: &[NamedArray]) -> Result<(), ModelError> {
        self.norm1.load_buffers(buffers)?;
        self.norm2.load_buffers(buffers)?;
        Ok(())
    }
}

/// One graph transformer layer.
///
/// The `H` per-head `d_k x d` projections are stored stacked as one `d x d`
/// matrix: rows `k*d_k .. (k+1)*d_k` belong to head `k`.
#[derive(Clone, Debug)]
pub struct GtLayer {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub out_nodes: Linear,
    pub node_block: FeedForwardBlock,
    /// Edge mode: edge projection, edge output map and the edge stream's own
    /// norm/FFN stack.
    pub edge_proj: Option<Linear>,
    pub out_edges: Option<Linear>,
    pub edge_block: Option<FeedForwardBlock>,
}

/// Result of one layer. `attention` is `m x H` in CSR slot order; `edges`
/// (edge mode) is `m x d` in slot order.
#[derive(Clone, Copy, Debug)]
pub struct LayerOutput {
    pub nodes: Var,
    pub edges: Option<Var>,
    pub attention: Var,
}

impl GtLayer {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, name: &str, store: &mut ParamStore, rng: &mut R) -> Self {
        let d = cfg.hidden_dim;
        let query = Linear::new(store, &format!("{name}.attn.query"), d, d, rng);
        let key = Linear::new(store, &format!("{name}.attn.key"), d, d, rng);
        let value = Linear::new(store, &format!("{name}.attn.value"), d, d, rng);
        let edge_proj = cfg
            .use_edge_features
            .then(|| Linear::new(store, &format!("{name}.attn.edge"), d, d, rng));
        let out_nodes = Linear::new(store, &format!("{name}.out_nodes"), d, d, rng);
        let node_block = FeedForwardBlock::new(cfg, &format!("{name}.node"), store, rng);
        let (out_edges, edge_block) = if cfg.use_edge_features {
            (
                Some(Linear::new(store, &format!("{name}.out_edges"), d, d, rng)),
                Some(FeedForwardBlock::new(cfg, &format!("{name}.edge"), store, rng)),
            )
        } else {
            (None, None)
        };
        GtLayer {
            query,
            key,
            value,
            out_nodes,
            node_block,
            edge_proj,
            out_edges,
            edge_block,
        }
    }

    /// Per-slot query·key products, `m x d`, scaled by `1/sqrt(d_k)`.
    fn scaled_products(
        &self,
        tape: &mut Tape,
        params: &Bound,
        h: Var,
        src: &[usize],
        dst: &[usize],
        cfg: &ModelConfig,
    ) -> Result<Var, ModelError> {
        let q = self.query.apply(tape, params, h)?;
        let k = self.key.apply(tape, params, h)?;
        let q_dst = tape.gather_rows(q, dst)?;
        let k_src = tape.gather_rows(k, src)?;
        let prod = tape.mul(q_dst, k_src)?;
        Ok(tape.scale(prod, 1.0 / (cfg.head_dim() as f64).sqrt()))
    }

    /// Softmax over each node's in-neighbors of the clamped per-head score
    /// sums, then the weighted sum of source values through `O_h`.
    #[allow(clippy::too_many_arguments)]
    fn attend(
        &self,
        tape: &mut Tape,
        params: &Bound,
        h: Var,
        score_terms: Var,
        src: &[usize],
        dst: &[usize],
        n: usize,
        cfg: &ModelConfig,
    ) -> Result<(Var, Var), ModelError> {
        let dk = cfg.head_dim();
        let raw = tape.block_sum(score_terms, dk)?;
        let scores = tape.clamp(raw, -cfg.clamp_bound, cfg.clamp_bound);
        let weights = tape.segment_softmax(scores, dst, n)?;
        let v = self.value.apply(tape, params, h)?;
        let v_src = tape.gather_rows(v, src)?;
        let spread = tape.block_broadcast(weights, dk)?;
        let weighted = tape.mul(v_src, spread)?;
        // nodes without in-neighbors receive a zero row
        let heads = tape.segment_sum(weighted, dst, n)?;
        let update = self.out_nodes.apply(tape, params, heads)?;
        Ok((update, weights))
    }

    /// `(Q h_dst ∘ K h_src) / sqrt(d_k) ∘ E e`, `m x d`.
    #[allow(clippy::too_many_arguments)]
    fn edge_score_vectors(
        &self,
        tape: &mut Tape,
        params: &Bound,
        h: Var,
        e: Var,
        edge_proj: Linear,
        src: &[usize],
        dst: &[usize],
        cfg: &ModelConfig,
    ) -> Result<Var, ModelError> {
        let prod = self.scaled_products(tape, params, h, src, dst, cfg)?;
        let modulation = edge_proj.apply(tape, params, e)?;
        Ok(tape.mul(prod, modulation)?)
    }

    /// Node-only layer.
    pub fn forward(
        &mut self,
        tape: &mut Tape,
        params: &Bound,
        graph: &Graph,
        h: Var,
        cfg: &ModelConfig,
        mode: Mode,
    ) -> Result<LayerOutput, ModelError> {
        let (src, dst) = graph.slot_endpoints();
        let prod = self.scaled_products(tape, params, h, &src, &dst, cfg)?;
        let (update, attention) = self.attend(tape, params, h, prod, &src, &dst, graph.num_nodes(), cfg)?;
        let nodes = self.node_block.forward(tape, params, h, update, mode)?;
        Ok(LayerOutput {
            nodes,
            edges: None,
            attention,
        })
    }

    /// Edge-feature layer. `e` is `m x d` in CSR slot order.
    ///
    /// Per head, the score vector of slot `j -> i` is
    /// `(Q h_i ∘ K h_j) / sqrt(d_k) ∘ E e_ij`; its component sum (clamped) is
    /// the attention logit and the concatenated vectors feed `O_e`.
    #[allow(clippy::too_many_arguments)]
    pub fn forward_edge(
        &mut self,
        tape: &mut Tape,
        params: &Bound,
        graph: &Graph,
        h: Var,
        e: Var,
        cfg: &ModelConfig,
        mode: Mode,
    ) -> Result<LayerOutput, ModelError> {
        let (edge_proj, out_edges) = match (self.edge_proj, self.out_edges) {
            (Some(p), Some(o)) => (p, o),
            _ => return Err(ModelError::NoEdgeFeatures),
        };
        let (src, dst) = graph.slot_endpoints();
        let score_vec = self.edge_score_vectors(tape, params, h, e, edge_proj, &src, &dst, cfg)?;
        let (update, attention) = self.attend(tape, params, h, score_vec, &src, &dst, graph.num_nodes(), cfg)?;
        let nodes = self.node_block.forward(tape, params, h, update, mode)?;
        let edge_update = out_edges.apply(tape, params, score_vec)?;
        let edge_block = self.edge_block.as_mut().expect("edge block in edge mode");
        let edges = edge_block.forward(tape, params, e, edge_update, mode)?;
        Ok(LayerOutput {
            nodes,
            edges: Some(edges),
            attention,
        })
    }

    pub fn buffers(&self) -> Vec<NamedArray> {
        let mut b = self.node_block.buffers();
        if let Some(eb) = &self.edge_block {
            b.extend(eb.buffers());
        }
        b
    }

    pub fn load_buffers(&mut self, buffers: &[NamedArray]) -> Result<(), ModelError> {
        self.node_block.load_buffers(buffers)?;
        if let Some(eb) = &mut self.edge_block {
            eb.load_buffers(buffers)?;
        }
        Ok(())
    }
}
