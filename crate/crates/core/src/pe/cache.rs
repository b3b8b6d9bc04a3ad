use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{lap_pe, LapPE, PeError};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tensor::Tensor;

/// One graph's precomputed encoding; `lap_pe` is `n x k` as a list of rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeCacheEntry {
    pub lap_pe: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

/// Precomputed Laplacian encodings for a dataset, in dataset order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeCache {
    pub k: usize,
    pub graphs: Vec<PeCacheEntry>,
}

impl PeCache {
    pub fn compute(graphs: &[Graph], k: usize) -> Result<Self, PeError> {
        let graphs = graphs
            .iter()
            .map(|g| {
                let pe = lap_pe(g, k)?;
                Ok(PeCacheEntry {
                    lap_pe: pe.encodings.to_rows(),
                    eigenvalues: pe.eigenvalues,
                })
            })
            .collect::<Result<_, PeError>>()?;
        Ok(PeCache { k, graphs })
    }

    /// Encodings as [`LapPE`] values, checked against the graphs they belong to.
    pub fn to_lap_pe(&self, graphs: &[Graph]) -> Result<Vec<LapPE>, PeError> {
        if graphs.len() != self.graphs.len() {
            return Err(PeError::Cache(format!(
                "cache holds {} graphs, dataset has {}",
                self.graphs.len(),
                graphs.len()
            )));
        }
        graphs
            .iter()
            .zip(&self.graphs)
            .enumerate()
            .map(|(i, (g, e))| {
                if e.lap_pe.len() != g.num_nodes() || e.lap_pe.iter().any(|r| r.len() != self.k) {
                    return Err(PeError::Cache(format!(
                        "graph {i}: expected a {}x{} lap_pe",
                        g.num_nodes(),
                        self.k
                    )));
                }
                let encodings = Tensor::from_rows(&e.lap_pe, self.k).map_err(|err| PeError::Cache(err.to_string()))?;
                Ok(LapPE {
                    encodings,
                    eigenvalues: e.eigenvalues.clone(),
                })
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string(self).expect("cache serializes");
        std::fs::write(path.as_ref(), text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| PeError::Cache(e.to_string()).into())
    }
}
