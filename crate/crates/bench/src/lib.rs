//! Fixtures shared by the kernel benchmarks.

use graphformer::graph::generate_sbm;
use graphformer::{Graph, SbmParams};

/// A two-block SBM graph with `2 * half` nodes.
pub fn sbm_graph(half: usize, seed: u64) -> Graph {
    generate_sbm(&SbmParams::new(vec![half, half], 0.5, 0.05, 0.1), seed).expect("valid sbm parameters")
}
