use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{build_graph, Graph, GraphError};
use crate::tensor::Tensor;

/// Number of categorical node types in the synthetic regression family.
pub const NUM_ATOM_TYPES: usize = 4;
/// Number of categorical edge ("bond") types in the synthetic regression family.
pub const NUM_BOND_TYPES: usize = 3;
const CHORD_PROBABILITY: f64 = 0.2;

/// Stochastic block model parameters.
///
/// `feature_noise` is the fraction of nodes per block whose input feature is
/// the one-hot of their block; every other node gets the extra "neutral"
/// symbol at index `num_blocks`. At least one node per block is revealed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub num_blocks: usize,
    pub block_sizes: Vec<usize>,
    pub p_intra: f64,
    pub q_inter: f64,
    pub feature_noise: f64,
}

impl SbmParams {
    pub fn new(block_sizes: Vec<usize>, p_intra: f64, q_inter: f64, feature_noise: f64) -> Self {
        SbmParams {
            num_blocks: block_sizes.len(),
            block_sizes,
            p_intra,
            q_inter,
            feature_noise,
        }
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if self.num_blocks == 0 || self.block_sizes.len() != self.num_blocks {
            return Err(GraphError::Sbm(format!(
                "num_blocks {} does not match {} block sizes",
                self.num_blocks,
                self.block_sizes.len()
            )));
        }
        if self.block_sizes.contains(&0) {
            return Err(GraphError::Sbm("every block needs at least one node".into()));
        }
        if !(0.0 <= self.q_inter && self.q_inter < self.p_intra && self.p_intra <= 1.0) {
            return Err(GraphError::Sbm(format!(
                "need 0 <= q_inter < p_intra <= 1, got q_inter={} p_intra={}",
                self.q_inter, self.p_intra
            )));
        }
        if !(0.0..=1.0).contains(&self.feature_noise) {
            return Err(GraphError::Sbm(format!("feature_noise {} outside [0, 1]", self.feature_noise)));
        }
        Ok(())
    }

    /// Width of the node feature one-hot (blocks plus the neutral symbol).
    pub fn feature_dim(&self) -> usize {
        self.num_blocks + 1
    }
}

/// Samples an SBM graph. Node ids are a random permutation of the block
/// layout so that node order carries no block information.
pub fn generate_sbm(params: &SbmParams, seed: u64) -> Result<Graph, GraphError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = params.block_sizes.iter().sum();
    let mut labels: Vec<usize> = params
        .block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &size)| std::iter::repeat_n(b, size))
        .collect();
    labels.shuffle(&mut rng);

    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] {
                params.p_intra
            } else {
                params.q_inter
            };
            if rng.gen::<f64>() < p {
                edges.push((i, j));
                edges.push((j, i));
            }
        }
    }

    let width = params.feature_dim();
    let mut features = Tensor::zeros(&[n, width]);
    for i in 0..n {
        features.set(i, params.num_blocks, 1.0);
    }
    for block in 0..params.num_blocks {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == block).collect();
        let reveal = ((params.feature_noise * members.len() as f64).round() as usize).max(1);
        members.shuffle(&mut rng);
        for &i in members.iter().take(reveal) {
            features.set(i, params.num_blocks, 0.0);
            features.set(i, block, 1.0);
        }
    }

    let ef = Tensor::zeros(&[edges.len(), 0]);
    build_graph(n, &edges, features, ef)?.with_node_labels(labels)
}

/// Number of triangles, treating any stored edge as undirected.
pub fn count_triangles(g: &Graph) -> usize {
    let n = g.num_nodes();
    let mut adj = vec![false; n * n];
    for (s, d) in g.edges() {
        if s != d {
            adj[s * n + d] = true;
            adj[d * n + s] = true;
        }
    }
    let mut count = 0;
    for a in 0..n {
        for b in (a + 1)..n {
            if !adj[a * n + b] {
                continue;
            }
            for c in (b + 1)..n {
                if adj[a * n + c] && adj[b * n + c] {
                    count += 1;
                }
            }
        }
    }
    count
}

/// `0.1 * nodes + 0.3 * triangles - 0.05 * directed edges`.
pub fn regression_target(g: &Graph) -> f64 {
    0.1 * g.num_nodes() as f64 + 0.3 * count_triangles(g) as f64 - 0.05 * g.num_edges() as f64
}

/// Random connected molecule-like graphs with one-hot node and bond types and
/// a closed-form structural label.
pub fn generate_regression_set(
    num_graphs: usize,
    size_range: (usize, usize),
    seed: u64,
) -> Result<Vec<Graph>, GraphError> {
    let (min, max) = size_range;
    if min < 2 || max < min {
        return Err(GraphError::Batch(format!("invalid size range ({min}, {max}); need 2 <= min <= max")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(num_graphs);
    for _ in 0..num_graphs {
        let n = rng.gen_range(min..=max);
        let mut undirected = Vec::new();
        let mut present = vec![false; n * n];
        for i in 1..n {
            let j = rng.gen_range(0..i);
            undirected.push((j, i));
            present[j * n + i] = true;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if !present[i * n + j] && rng.gen::<f64>() < CHORD_PROBABILITY {
                    undirected.push((i, j));
                    present[i * n + j] = true;
                }
            }
        }
        let mut nf = Tensor::zeros(&[n, NUM_ATOM_TYPES]);
        for i in 0..n {
            nf.set(i, rng.gen_range(0..NUM_ATOM_TYPES), 1.0);
        }
        let mut edges = Vec::with_capacity(2 * undirected.len());
        let mut ef = Vec::with_capacity(2 * undirected.len() * NUM_BOND_TYPES);
        for &(a, b) in &undirected {
            let bond = rng.gen_range(0..NUM_BOND_TYPES);
            for pair in [(a, b), (b, a)] {
                edges.push(pair);
                ef.extend((0..NUM_BOND_TYPES).map(|t| if t == bond { 1.0 } else { 0.0 }));
            }
        }
        let ef = Tensor::matrix(edges.len(), NUM_BOND_TYPES, ef).expect("bond rows");
        let g = build_graph(n, &edges, nf, ef)?;
        let label = regression_target(&g);
        out.push(g.with_graph_label(label));
    }
    Ok(out)
}
