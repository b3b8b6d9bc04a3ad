//! Positional encodings: Laplacian eigenvectors and Weisfeiler-Lehman roles.

mod cache;
mod eigen;
mod wl;

pub use cache::{PeCache, PeCacheEntry};
pub use eigen::{symmetric_eigendecompose, SpectralDecomposition, DEFAULT_TOL, MAX_SWEEPS};
pub use wl::{wl_roles, WlRoles};

use rand::Rng;
use thiserror::Error;

use crate::graph::Graph;
use crate::tensor::Tensor;

/// Eigenvalues below this are treated as zero (one per connected component).
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-8;
const SIGN_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum PeError {
    #[error("graph edge set is not symmetric; add reverse edges before computing the Laplacian")]
    AsymmetricGraph,
    #[error("matrix is not symmetric: |m[{row},{col}] - m[{col},{row}]| = {gap:e}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },
    #[error("expected a non-empty square matrix, got shape {0:?}")]
    NotSquare(Vec<usize>),
    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps (max off-diagonal {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error("positional encoding dimension must be at least 1")]
    ZeroDimension,
    #[error("pe cache: {0}")]
    Cache(String),
}

/// `I - D^-1/2 A D^-1/2` with `A` the binary adjacency (parallel edges
/// collapsed). Nodes of degree 0 get an all-zero row and column.
pub fn normalized_laplacian(g: &Graph) -> Result<Tensor, PeError> {
    if !g.is_symmetric() {
        return Err(PeError::AsymmetricGraph);
    }
    let n = g.num_nodes();
    let mut adj = vec![0.0; n * n];
    for (s, d) in g.edges() {
        adj[d * n + s] = 1.0;
    }
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| {
            let deg: f64 = adj[i * n..(i + 1) * n].iter().sum();
            if deg > 0.0 {
                1.0 / deg.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut lap = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            let identity = if i == j && inv_sqrt_deg[i] > 0.0 { 1.0 } else { 0.0 };
            let v = identity - inv_sqrt_deg[i] * adj[i * n + j] * inv_sqrt_deg[j];
            lap.set(i, j, v);
        }
    }
    // exact symmetry
    for i in 0..n {
        for j in (i + 1)..n {
            let v = lap.get(i, j);
            lap.set(j, i, v);
        }
    }
    Ok(lap)
}

/// Per-node Laplacian positional encoding.
#[derive(Clone, Debug, PartialEq)]
pub struct LapPE {
    /// `num_nodes x k`, zero-padded on the right when fewer than `k`
    /// non-trivial eigenvectors exist.
    pub encodings: Tensor,
    /// Eigenvalues of the selected (non-padding) columns, ascending.
    pub eigenvalues: Vec<f64>,
}

impl LapPE {
    pub fn k(&self) -> usize {
        self.encodings.cols()
    }
}

/// Flips `v` so its first component with magnitude above `1e-10` is positive.
fn canonical_sign(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|x| x.abs() > SIGN_TOL) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// The `k` smallest non-trivial eigenvectors of the normalized Laplacian.
///
/// All eigenvalues below [`ZERO_EIGENVALUE_TOL`] are dropped first (one per
/// connected component); each kept eigenvector is sign-normalized so its first
/// non-negligible entry is positive.
pub fn lap_pe(g: &Graph, k: usize) -> Result<LapPE, PeError> {
    if k == 0 {
        return Err(PeError::ZeroDimension);
    }
    let n = g.num_nodes();
    let mut encodings = Tensor::zeros(&[n, k]);
    if n == 0 {
        return Ok(LapPE {
            encodings,
            eigenvalues: vec![],
        });
    }
    let lap = normalized_laplacian(g)?;
    let dec = symmetric_eigendecompose(&lap, DEFAULT_TOL)?;
    let first = dec
        .eigenvalues
        .iter()
        .position(|&l| l >= ZERO_EIGENVALUE_TOL)
        .unwrap_or(n);
    let selected: Vec<usize> = (first..n).take(k).collect();
    let mut eigenvalues = Vec::with_capacity(selected.len());
    for (col, &a) in selected.iter().enumerate() {
        let mut v: Vec<f64> = (0..n).map(|i| dec.eigenvectors.get(i, a)).collect();
        canonical_sign(&mut v);
        for (i, x) in v.into_iter().enumerate() {
            encodings.set(i, col, x);
        }
        eigenvalues.push(dec.eigenvalues[a]);
    }
    Ok(LapPE {
        encodings,
        eigenvalues,
    })
}

/// Multiplies each column of `pe` by an independent fair ±1.
pub fn random_sign_flip<R: Rng + ?Sized>(pe: &LapPE, rng: &mut R) -> LapPE {
    let signs: Vec<f64> = (0..pe.k()).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
    LapPE {
        encodings: flip_columns(&pe.encodings, &signs),
        eigenvalues: pe.eigenvalues.clone(),
    }
}

/// Scales column `c` of `m` by `signs[c]`.
pub fn flip_columns(m: &Tensor, signs: &[f64]) -> Tensor {
    let mut out = m.clone();
    let k = out.cols();
    assert_eq!(k, signs.len());
    for (e, v) in out.data_mut().iter_mut().enumerate() {
        *v *= signs[e % k];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn undirected(n: usize, pairs: &[(usize, usize)]) -> Graph {
        let edges: Vec<_> = pairs.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
        build_graph(n, &edges, Tensor::zeros(&[n, 1]), Tensor::zeros(&[edges.len(), 0])).unwrap()
    }

    #[test]
    fn exchange_laplacian() {
        let lap = normalized_laplacian(&undirected(2, &[(0, 1)])).unwrap();
        assert_eq!(lap.data(), &[1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn path_laplacian_and_spectrum() {
        let lap = normalized_laplacian(&undirected(3, &[(0, 1), (1, 2)])).unwrap();
        let h = -std::f64::consts::FRAC_1_SQRT_2;
        assert!((lap.get(0, 1) - h).abs() < 1e-15 && (lap.get(1, 2) - h).abs() < 1e-15);
        assert_eq!(lap.get(0, 2), 0.0);
        let d = symmetric_eigendecompose(&lap, DEFAULT_TOL).unwrap();
        for (got, want) in d.eigenvalues.iter().zip([0.0, 1.0, 2.0]) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn empty_graph_laplacian_is_zero() {
        let lap = normalized_laplacian(&undirected(3, &[])).unwrap();
        assert!(lap.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn asymmetric_graph_rejected() {
        let g = build_graph(2, &[(0, 1)], Tensor::zeros(&[2, 1]), Tensor::zeros(&[1, 0])).unwrap();
        let err = normalized_laplacian(&g).unwrap_err();
        assert_eq!(err, PeError::AsymmetricGraph);
        assert!(err.to_string().contains("symmetr"));
    }

    #[test]
    fn path_pe_sign_pattern() {
        let pe = lap_pe(&undirected(3, &[(0, 1), (1, 2)]), 1).unwrap();
        let e = &pe.encodings;
        assert!(e.get(0, 0) > 0.0);
        assert!(e.get(1, 0).abs() < 1e-10);
        assert!(e.get(2, 0) < 0.0);
        assert!((e.get(0, 0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert!((pe.eigenvalues[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn small_graph_is_padded() {
        let pe = lap_pe(&undirected(2, &[(0, 1)]), 5).unwrap();
        assert_eq!(pe.encodings.shape(), &[2, 5]);
        assert_eq!(pe.eigenvalues.len(), 1);
        for i in 0..2 {
            assert!(pe.encodings.get(i, 0).abs() > 0.5);
            assert!(pe.encodings.row(i)[1..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn disconnected_drops_every_zero_eigenvalue() {
        let pe = lap_pe(&undirected(4, &[(0, 1), (2, 3)]), 1).unwrap();
        // spectrum {0, 0, 2, 2}: both zeros dropped
        assert!((pe.eigenvalues[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn zero_k_rejected() {
        assert_eq!(lap_pe(&undirected(2, &[(0, 1)]), 0).unwrap_err(), PeError::ZeroDimension);
    }

    #[test]
    fn sign_flip_properties() {
        let pe = lap_pe(&undirected(4, &[(0, 1), (1, 2), (2, 3)]), 2).unwrap();
        assert_eq!(flip_columns(&pe.encodings, &[1.0, 1.0]), pe.encodings);
        let signs = [-1.0, 1.0];
        assert_eq!(flip_columns(&flip_columns(&pe.encodings, &signs), &signs), pe.encodings);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let flipped = random_sign_flip(&pe, &mut rng);
        for c in 0..2 {
            let same = (0..4).all(|i| flipped.encodings.get(i, c) == pe.encodings.get(i, c));
            let neg = (0..4).all(|i| flipped.encodings.get(i, c) == -pe.encodings.get(i, c));
            assert!(same || neg);
        }
    }

    #[test]
    fn sign_flip_mean_is_zero() {
        let pe = LapPE {
            encodings: Tensor::matrix(1, 1, vec![1.0]).unwrap(),
            eigenvalues: vec![1.0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let trials = 1000;
        let sum: f64 = (0..trials)
            .map(|_| random_sign_flip(&pe, &mut rng).encodings.get(0, 0))
            .sum();
        let mean = sum / trials as f64;
        // each draw has variance 1
        let se = 1.0 / (trials as f64).sqrt();
        assert!(mean.abs() <= 3.0 * se, "mean {mean}");
    }
}
