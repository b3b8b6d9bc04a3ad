use std::ops::Range;

use super::{build_graph, Graph, GraphError};
use crate::tensor::Tensor;

/// Several graphs merged into one disconnected graph.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphBatch {
    graph: Graph,
    graph_of_node: Vec<usize>,
    graph_sizes: Vec<usize>,
    node_offsets: Vec<usize>,
    edge_offsets: Vec<usize>,
    graph_labels: Option<Vec<f64>>,
}

/// Merges graphs in input order, offsetting node and edge ids.
///
/// All graphs must share node/edge feature widths and carry the same kind of
/// labels.
pub fn batch_graphs<'a>(graphs: impl IntoIterator<Item = &'a Graph>) -> Result<GraphBatch, GraphError> {
    let graphs: Vec<&Graph> = graphs.into_iter().collect();
    let first = graphs
        .first()
        .ok_or_else(|| GraphError::Batch("no graphs given".into()))?;
    let (dn, de) = (first.node_feature_dim(), first.edge_feature_dim());
    let has_graph_label = first.graph_label().is_some();
    let has_node_labels = first.node_labels().is_some();
    for (i, g) in graphs.iter().enumerate() {
        if g.node_feature_dim() != dn || g.edge_feature_dim() != de {
            return Err(GraphError::Batch(format!(
                "graph {i} has feature widths ({}, {}), graph 0 has ({dn}, {de})",
                g.node_feature_dim(),
                g.edge_feature_dim()
            )));
        }
        if g.graph_label().is_some() != has_graph_label || g.node_labels().is_some() != has_node_labels {
            return Err(GraphError::Batch(format!("graph {i} carries a different label kind than graph 0")));
        }
    }

    let total_nodes: usize = graphs.iter().map(|g| g.num_nodes()).sum();
    let total_edges: usize = graphs.iter().map(|g| g.num_edges()).sum();
    let mut edges = Vec::with_capacity(total_edges);
    let mut nf = Vec::with_capacity(total_nodes * dn);
    let mut ef = Vec::with_capacity(total_edges * de);
    let mut graph_of_node = Vec::with_capacity(total_nodes);
    let mut graph_sizes = Vec::with_capacity(graphs.len());
    let mut node_offsets = vec![0];
    let mut edge_offsets = vec![0];
    let mut node_labels = has_node_labels.then(Vec::new);
    for (gi, g) in graphs.iter().enumerate() {
        let off = *node_offsets.last().unwrap();
        edges.extend(g.edges().into_iter().map(|(s, d)| (s + off, d + off)));
        nf.extend_from_slice(g.node_features().data());
        ef.extend_from_slice(g.edge_features().data());
        graph_of_node.extend(std::iter::repeat_n(gi, g.num_nodes()));
        graph_sizes.push(g.num_nodes());
        node_offsets.push(off + g.num_nodes());
        edge_offsets.push(edge_offsets.last().unwrap() + g.num_edges());
        if let (Some(all), Some(l)) = (node_labels.as_mut(), g.node_labels()) {
            all.extend_from_slice(l);
        }
    }
    let nf = Tensor::matrix(total_nodes, dn, nf).expect("node feature rows");
    let ef = Tensor::matrix(total_edges, de, ef).expect("edge feature rows");
    let mut merged = build_graph(total_nodes, &edges, nf, ef)?;
    if let Some(labels) = node_labels {
        merged = merged.with_node_labels(labels)?;
    }
    let graph_labels = has_graph_label.then(|| graphs.iter().map(|g| g.graph_label().unwrap()).collect());
    Ok(GraphBatch {
        graph: merged,
        graph_of_node,
        graph_sizes,
        node_offsets,
        edge_offsets,
        graph_labels,
    })
}

impl GraphBatch {
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn num_graphs(&self) -> usize {
        self.graph_sizes.len()
    }

    pub fn graph_of_node(&self) -> &[usize] {
        &self.graph_of_node
    }

    pub fn graph_sizes(&self) -> &[usize] {
        &self.graph_sizes
    }

    pub fn node_range(&self, g: usize) -> Range<usize> {
        self.node_offsets[g]..self.node_offsets[g + 1]
    }

    /// Edge-id range of source graph `g` in the merged graph.
    pub fn edge_range(&self, g: usize) -> Range<usize> {
        self.edge_offsets[g]..self.edge_offsets[g + 1]
    }

    pub fn graph_labels(&self) -> Option<&[f64]> {
        self.graph_labels.as_deref()
    }

    /// Splits an `n x c` per-node matrix back into per-graph blocks.
    pub fn split_node_rows(&self, t: &Tensor) -> Vec<Tensor> {
        (0..self.num_graphs())
            .map(|g| {
                let idx: Vec<usize> = self.node_range(g).collect();
                t.gather_rows(&idx)
            })
            .collect()
    }

    /// Applies a structural transform to the merged graph (densify, self
    /// loops); node ranges are unchanged since both keep node ids.
    pub fn map_graph(&self, f: impl FnOnce(&Graph) -> Graph) -> GraphBatch {
        let graph = f(&self.graph);
        assert_eq!(graph.num_nodes(), self.graph.num_nodes());
        // edge ranges are no longer meaningful per graph after a rewrite; recompute
        // from edge endpoints, which never cross graphs
        let mut counts = vec![0usize; self.num_graphs()];
        for (_, d) in graph.edges() {
            counts[self.graph_of_node[d]] += 1;
        }
        let mut edge_offsets = vec![0];
        for c in counts {
            edge_offsets.push(edge_offsets.last().unwrap() + c);
        }
        GraphBatch {
            graph,
            graph_of_node: self.graph_of_node.clone(),
            graph_sizes: self.graph_sizes.clone(),
            node_offsets: self.node_offsets.clone(),
            edge_offsets,
            graph_labels: self.graph_labels.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri(feature: f64) -> Graph {
        let edges = [(0, 1), (1, 0), (1, 2), (2, 1), (0, 2), (2, 0)];
        let nf = Tensor::matrix(3, 2, (0..6).map(|i| feature + i as f64).collect()).unwrap();
        build_graph(3, &edges, nf, Tensor::zeros(&[6, 1]))
            .unwrap()
            .with_graph_label(feature)
    }

    #[test]
    fn single_graph_is_identity() {
        let g = tri(1.0);
        let b = batch_graphs([&g]).unwrap();
        assert_eq!(b.graph().edges(), g.edges());
        assert_eq!(b.graph().node_features(), g.node_features());
        assert_eq!(b.graph_labels(), Some(&[1.0][..]));
    }

    #[test]
    fn no_cross_edges() {
        let (a, c) = (tri(0.0), tri(10.0));
        let b = batch_graphs([&a, &c]).unwrap();
        assert_eq!(b.graph().num_nodes(), 6);
        assert!(b.graph().in_neighbors(4).iter().all(|j| (3..6).contains(j)));
        assert_eq!(b.graph_of_node(), &[0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn split_recovers_features() {
        let (a, c) = (tri(0.0), tri(10.0));
        let b = batch_graphs([&a, &c]).unwrap();
        let parts = b.split_node_rows(b.graph().node_features());
        assert_eq!(&parts[0], a.node_features());
        assert_eq!(&parts[1], c.node_features());
    }

    #[test]
    fn mixed_widths_rejected() {
        let a = tri(0.0);
        let other = build_graph(1, &[], Tensor::zeros(&[1, 5]), Tensor::zeros(&[0, 1]))
            .unwrap()
            .with_graph_label(0.0);
        assert!(matches!(batch_graphs([&a, &other]), Err(GraphError::Batch(_))));
        let unlabeled = build_graph(1, &[], Tensor::zeros(&[1, 2]), Tensor::zeros(&[0, 1])).unwrap();
        assert!(batch_graphs([&a, &unlabeled]).is_err());
        assert!(batch_graphs(std::iter::empty()).is_err());
    }
}
