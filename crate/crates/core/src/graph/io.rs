use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_graph, Graph, GraphError};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// On-disk graph record. Feature matrices are lists of rows; `edge_features`
/// rows align with `edges`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphJson {
    pub num_nodes: usize,
    pub edges: Vec<[usize; 2]>,
    pub node_features: Vec<Vec<f64>>,
    #[serde(default)]
    pub edge_features: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_label: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_labels: Option<Vec<usize>>,
}

fn field_err(field: &str, message: impl Into<String>) -> GraphError {
    GraphError::Json {
        field: field.to_string(),
        message: message.into(),
    }
}

fn matrix_from_rows(field: &str, rows: &[Vec<f64>], expected_rows: usize) -> Result<Tensor, GraphError> {
    if rows.len() != expected_rows {
        return Err(field_err(field, format!("expected {expected_rows} rows, got {}", rows.len())));
    }
    let width = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
        return Err(field_err(field, format!("row {i} has width {}, row 0 has width {width}", r.len())));
    }
    Ok(Tensor::from_rows(rows, width).expect("widths checked"))
}

impl GraphJson {
    pub fn from_graph(g: &Graph) -> Self {
        GraphJson {
            num_nodes: g.num_nodes(),
            edges: g.edges().into_iter().map(|(s, d)| [s, d]).collect(),
            node_features: g.node_features().to_rows(),
            edge_features: g.edge_features().to_rows(),
            graph_label: g.graph_label(),
            node_labels: g.node_labels().map(<[usize]>::to_vec),
        }
    }

    pub fn into_graph(self) -> Result<Graph, GraphError> {
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        let nf = matrix_from_rows("node_features", &self.node_features, self.num_nodes)?;
        // absent edge features mean zero width
        let ef = if self.edge_features.is_empty() {
            Tensor::zeros(&[edges.len(), 0])
        } else {
            matrix_from_rows("edge_features", &self.edge_features, edges.len())?
        };
        let mut g = build_graph(self.num_nodes, &edges, nf, ef).map_err(|e| field_err("edges", e.to_string()))?;
        if let Some(l) = self.graph_label {
            g = g.with_graph_label(l);
        }
        if let Some(labels) = self.node_labels {
            g = g.with_node_labels(labels).map_err(|e| field_err("node_labels", e.to_string()))?;
        }
        Ok(g)
    }
}

/// Parses a graph from JSON text; errors name the offending field.
pub fn graph_from_json_str(text: &str) -> Result<Graph, GraphError> {
    let raw: GraphJson = serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        // serde reports "missing field `x`" / "unknown field `x`"
        let field = msg
            .split('`')
            .nth(1)
            .map(str::to_string)
            .unwrap_or_else(|| "<document>".to_string());
        GraphError::Json { field, message: msg }
    })?;
    raw.into_graph()
}

pub fn save_json(g: &Graph, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string(&GraphJson::from_graph(g)).expect("graph serializes");
    std::fs::write(path.as_ref(), text).map_err(|e| Error::io(path, e))
}

pub fn load_json(path: impl AsRef<Path>) -> Result<Graph> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
    Ok(graph_from_json_str(&text)?)
}
