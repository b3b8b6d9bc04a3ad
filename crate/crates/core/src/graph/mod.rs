//! Sparse graphs stored as in-neighbor CSR, plus batching, synthetic datasets
//! and the JSON graph format.

mod batch;
mod generate;
mod io;

pub use batch::{batch_graphs, GraphBatch};
pub use generate::{
    count_triangles, generate_regression_set, generate_sbm, regression_target, SbmParams, NUM_ATOM_TYPES, NUM_BOND_TYPES,
};
pub use io::{graph_from_json_str, load_json, save_json, GraphJson};

use std::ops::Range;

use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("edge {index} ({src}, {dst}) references a node outside 0..{num_nodes}")]
    NodeOutOfRange {
        index: usize,
        src: usize,
        dst: usize,
        num_nodes: usize,
    },
    #[error("{what}: expected {expected} rows, got {got}")]
    RowCount {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{0} must be a 2-d matrix")]
    NotMatrix(&'static str),
    #[error("cannot batch graphs: {0}")]
    Batch(String),
    #[error("invalid SBM parameters: {0}")]
    Sbm(String),
    #[error("graph json field `{field}`: {message}")]
    Json { field: String, message: String },
}

/// Immutable directed graph in in-neighbor CSR form.
///
/// Row `i` of the CSR enumerates the sources `j` of all stored edges `j -> i`,
/// i.e. the neighborhood node `i` attends over. `edge_ids[s]` maps adjacency
/// slot `s` to its row in `edge_features`, which follows the order edges were
/// given to [`build_graph`].
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    csr_offsets: Vec<usize>,
    csr_targets: Vec<usize>,
    edge_ids: Vec<usize>,
    node_features: Tensor,
    edge_features: Tensor,
    graph_label: Option<f64>,
    node_labels: Option<Vec<usize>>,
}

/// Builds the in-neighbor CSR of `edges` (given as `(src, dst)` pairs).
/// Parallel edges are kept; no self-loops are added.
pub fn build_graph(
    num_nodes: usize,
    edges: &[(usize, usize)],
    node_features: Tensor,
    edge_features: Tensor,
) -> Result<Graph, GraphError> {
    for (index, &(src, dst)) in edges.iter().enumerate() {
        if src >= num_nodes || dst >= num_nodes {
            return Err(GraphError::NodeOutOfRange {
                index,
                src,
                dst,
                num_nodes,
            });
        }
    }
    let (nf_rows, _) = node_features.dims2().map_err(|_| GraphError::NotMatrix("node_features"))?;
    if nf_rows != num_nodes {
        return Err(GraphError::RowCount {
            what: "node_features",
            expected: num_nodes,
            got: nf_rows,
        });
    }
    let (ef_rows, _) = edge_features.dims2().map_err(|_| GraphError::NotMatrix("edge_features"))?;
    if ef_rows != edges.len() {
        return Err(GraphError::RowCount {
            what: "edge_features",
            expected: edges.len(),
            got: ef_rows,
        });
    }

    let mut csr_offsets = vec![0usize; num_nodes + 1];
    for &(_, dst) in edges {
        csr_offsets[dst + 1] += 1;
    }
    for i in 0..num_nodes {
        csr_offsets[i + 1] += csr_offsets[i];
    }
    let mut cursor = csr_offsets.clone();
    let mut csr_targets = vec![0usize; edges.len()];
    let mut edge_ids = vec![0usize; edges.len()];
    for (id, &(src, dst)) in edges.iter().enumerate() {
        let slot = cursor[dst];
        csr_targets[slot] = src;
        edge_ids[slot] = id;
        cursor[dst] += 1;
    }
    Ok(Graph {
        num_nodes,
        csr_offsets,
        csr_targets,
        edge_ids,
        node_features,
        edge_features,
        graph_label: None,
        node_labels: None,
    })
}

impl Graph {
    pub fn with_graph_label(mut self, label: f64) -> Self {
        self.graph_label = Some(label);
        self
    }

    pub fn with_node_labels(mut self, labels: Vec<usize>) -> Result<Self, GraphError> {
        if labels.len() != self.num_nodes {
            return Err(GraphError::RowCount {
                what: "node_labels",
                expected: self.num_nodes,
                got: labels.len(),
            });
        }
        self.node_labels = Some(labels);
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.csr_targets.len()
    }

    pub fn csr_offsets(&self) -> &[usize] {
        &self.csr_offsets
    }

    pub fn csr_targets(&self) -> &[usize] {
        &self.csr_targets
    }

    pub fn edge_ids(&self) -> &[usize] {
        &self.edge_ids
    }

    pub fn node_features(&self) -> &Tensor {
        &self.node_features
    }

    pub fn edge_features(&self) -> &Tensor {
        &self.edge_features
    }

    pub fn node_feature_dim(&self) -> usize {
        self.node_features.cols()
    }

    pub fn edge_feature_dim(&self) -> usize {
        self.edge_features.cols()
    }

    pub fn graph_label(&self) -> Option<f64> {
        self.graph_label
    }

    pub fn node_labels(&self) -> Option<&[usize]> {
        self.node_labels.as_deref()
    }

    /// Adjacency slots of node `i`.
    pub fn slots(&self, i: usize) -> Range<usize> {
        self.csr_offsets[i]..self.csr_offsets[i + 1]
    }

    /// In-neighbors of `i` (sources of edges into `i`).
    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.csr_targets[self.slots(i)]
    }

    pub fn in_degree(&self, i: usize) -> usize {
        self.csr_offsets[i + 1] - self.csr_offsets[i]
    }

    /// Per-slot `(src, dst)` arrays in CSR order.
    pub fn slot_endpoints(&self) -> (Vec<usize>, Vec<usize>) {
        let mut dst = Vec::with_capacity(self.num_edges());
        for i in 0..self.num_nodes {
            dst.extend(std::iter::repeat_n(i, self.in_degree(i)));
        }
        (self.csr_targets.clone(), dst)
    }

    /// Edges as `(src, dst)` in edge-id order, i.e. the order given to
    /// [`build_graph`].
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = vec![(0, 0); self.num_edges()];
        for i in 0..self.num_nodes {
            for s in self.slots(i) {
                out[self.edge_ids[s]] = (self.csr_targets[s], i);
            }
        }
        out
    }

    /// True when every edge `j -> i` has a matching `i -> j` (multiplicity ignored).
    pub fn is_symmetric(&self) -> bool {
        let mut set = std::collections::HashSet::with_capacity(self.num_edges());
        for (s, d) in self.edges() {
            set.insert((s, d));
        }
        set.iter().all(|&(s, d)| set.contains(&(d, s)))
    }

    /// Complete digraph on the same nodes: an edge `j -> i` for every ordered
    /// pair `i != j`. Edge features are dropped (zero width); node features and
    /// labels carry over.
    pub fn densify(&self) -> Graph {
        let n = self.num_nodes;
        let mut edges = Vec::with_capacity(n * n.saturating_sub(1));
        for dst in 0..n {
            for src in 0..n {
                if src != dst {
                    edges.push((src, dst));
                }
            }
        }
        let ef = Tensor::zeros(&[edges.len(), 0]);
        let mut g = build_graph(n, &edges, self.node_features.clone(), ef).expect("complete digraph is valid");
        g.graph_label = self.graph_label;
        g.node_labels = self.node_labels.clone();
        g
    }

    /// Appends one self-loop `i -> i` per node that does not already have one.
    /// New loops get zero edge features.
    pub fn with_self_loops(&self) -> Graph {
        let mut edges = self.edges();
        let de = self.edge_feature_dim();
        let mut ef = self.edge_features.data().to_vec();
        for i in 0..self.num_nodes {
            if !self.in_neighbors(i).contains(&i) {
                edges.push((i, i));
                ef.extend(std::iter::repeat_n(0.0, de));
            }
        }
        let ef = Tensor::matrix(edges.len(), de, ef).expect("edge feature rows");
        let mut g = build_graph(self.num_nodes, &edges, self.node_features.clone(), ef).expect("valid");
        g.graph_label = self.graph_label;
        g.node_labels = self.node_labels.clone();
        g
    }

    /// Relabels node `i` as `perm[i]`, permuting features and labels with it.
    /// Edge order and edge features are unchanged.
    pub fn relabel(&self, perm: &[usize]) -> Graph {
        assert_eq!(perm.len(), self.num_nodes);
        let edges: Vec<_> = self.edges().into_iter().map(|(s, d)| (perm[s], perm[d])).collect();
        let d = self.node_feature_dim();
        let mut nf = Tensor::zeros(&[self.num_nodes, d]);
        for i in 0..self.num_nodes {
            nf.row_mut(perm[i]).copy_from_slice(self.node_features.row(i));
        }
        let mut g = build_graph(self.num_nodes, &edges, nf, self.edge_features.clone()).expect("valid relabel");
        g.graph_label = self.graph_label;
        g.node_labels = self.node_labels.as_ref().map(|l| {
            let mut out = vec![0; l.len()];
            for i in 0..l.len() {
                out[perm[i]] = l[i];
            }
            out
        });
        g
    }

    /// Replaces node features, keeping structure and labels.
    pub fn with_node_features(&self, features: Tensor) -> Result<Graph, GraphError> {
        let (rows, _) = features.dims2().map_err(|_| GraphError::NotMatrix("node_features"))?;
        if rows != self.num_nodes {
            return Err(GraphError::RowCount {
                what: "node_features",
                expected: self.num_nodes,
                got: rows,
            });
        }
        let mut g = self.clone();
        g.node_features = features;
        Ok(g)
    }
}

/// Weakly connected component id per node, numbered by first appearance.
pub fn connected_components(g: &Graph) -> (usize, Vec<usize>) {
    let n = g.num_nodes();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (s, d) in g.edges() {
        let (a, b) = (find(&mut parent, s), find(&mut parent, d));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut ids = vec![usize::MAX; n];
    let mut root_id = std::collections::HashMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        let next = root_id.len();
        ids[i] = *root_id.entry(r).or_insert(next);
    }
    (root_id.len(), ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn plain(n: usize, edges: &[(usize, usize)]) -> Graph {
        build_graph(n, edges, Tensor::zeros(&[n, 1]), Tensor::zeros(&[edges.len(), 0])).unwrap()
    }

    #[test]
    fn two_node_exchange() {
        let g = plain(2, &[(0, 1), (1, 0)]);
        assert_eq!(g.in_neighbors(1), &[0]);
        assert_eq!(g.in_neighbors(0), &[1]);
    }

    #[test]
    fn empty_single_node() {
        let g = plain(1, &[]);
        assert_eq!(g.csr_offsets(), &[0, 0]);
        assert_eq!(g.num_edges(), 0);
    }

    #[test]
    fn three_path_neighborhoods() {
        let g = plain(3, &[(0, 1), (1, 0), (1, 2), (2, 1)]);
        let mut mid = g.in_neighbors(1).to_vec();
        mid.sort();
        assert_eq!(mid, vec![0, 2]);
        assert_eq!(g.in_neighbors(0), &[1]);
        assert_eq!(g.in_neighbors(2), &[1]);
    }

    #[test]
    fn construction_errors() {
        let err = build_graph(2, &[(0, 2)], Tensor::zeros(&[2, 1]), Tensor::zeros(&[1, 0])).unwrap_err();
        assert!(matches!(err, GraphError::NodeOutOfRange { index: 0, .. }));
        let err = build_graph(2, &[(0, 1)], Tensor::zeros(&[3, 1]), Tensor::zeros(&[1, 0])).unwrap_err();
        assert!(matches!(err, GraphError::RowCount { what: "node_features", .. }));
        let err = build_graph(2, &[(0, 1)], Tensor::zeros(&[2, 1]), Tensor::zeros(&[2, 4])).unwrap_err();
        assert!(matches!(err, GraphError::RowCount { what: "edge_features", .. }));
    }

    #[test]
    fn parallel_edges_kept_and_features_follow_ids() {
        let ef = Tensor::matrix(3, 1, vec![10.0, 20.0, 30.0]).unwrap();
        let g = build_graph(2, &[(0, 1), (0, 1), (1, 0)], Tensor::zeros(&[2, 1]), ef).unwrap();
        assert_eq!(g.in_neighbors(1), &[0, 0]);
        let feats: Vec<f64> = g.slots(1).map(|s| g.edge_features().get(g.edge_ids()[s], 0)).collect();
        assert_eq!(feats, vec![10.0, 20.0]);
        assert_eq!(g.edges(), vec![(0, 1), (0, 1), (1, 0)]);
    }

    #[test]
    fn densify_counts() {
        let path = plain(3, &[(0, 1), (1, 0), (1, 2), (2, 1)]);
        let full = path.densify();
        assert_eq!(full.num_edges(), 6);
        assert_eq!(full.edge_feature_dim(), 0);
        assert_eq!(plain(1, &[]).densify().num_edges(), 0);
        for n in 2..7 {
            assert_eq!(plain(n, &[]).densify().num_edges(), n * (n - 1));
        }
    }

    #[test]
    fn self_loops_added_once() {
        let g = plain(2, &[(0, 1), (1, 1)]).with_self_loops();
        assert_eq!(g.num_edges(), 3);
        assert!(g.in_neighbors(0).contains(&0));
        assert_eq!(g.in_neighbors(1).iter().filter(|&&j| j == 1).count(), 1);
    }

    #[test]
    fn components() {
        let g = plain(5, &[(0, 1), (1, 0), (3, 4), (4, 3)]);
        assert_eq!(connected_components(&g), (3, vec![0, 0, 1, 2, 2]));
    }

    #[test]
    fn symmetry_check() {
        assert!(plain(2, &[(0, 1), (1, 0)]).is_symmetric());
        assert!(!plain(2, &[(0, 1)]).is_symmetric());
    }
}
