//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use graphformer::model::GtLayer;
use graphformer::{build_graph, Graph, ModelConfig, ParamStore, Tensor};
use nalgebra::DMatrix;
use rand::Rng;

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// Undirected Erdős–Rényi graph stored with both edge directions.
pub fn random_undirected<R: Rng>(rng: &mut R, n: usize, p: f64, dn: usize, de: usize) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen::<f64>() < p {
                edges.push((i, j));
                edges.push((j, i));
            }
        }
    }
    let nf = random_matrix(rng, n, dn, 1.0);
    let ef = random_matrix(rng, edges.len(), de, 1.0);
    build_graph(n, &edges, nf, ef).unwrap()
}

/// Directed graph with independent edges, self-loops allowed.
pub fn random_directed<R: Rng>(rng: &mut R, n: usize, p: f64, dn: usize) -> Graph {
    let mut edges = Vec::new();
    for s in 0..n {
        for d in 0..n {
            if rng.gen::<f64>() < p {
                edges.push((s, d));
            }
        }
    }
    let nf = random_matrix(rng, n, dn, 1.0);
    build_graph(n, &edges, nf, Tensor::zeros(&[edges.len(), 0])).unwrap()
}

/// Every ordered pair including `i -> i`, so each node attends to all nodes.
pub fn all_pairs_graph(n: usize, features: Tensor) -> Graph {
    let edges: Vec<(usize, usize)> = (0..n).flat_map(|d| (0..n).map(move |s| (s, d))).collect();
    let m = edges.len();
    build_graph(n, &edges, features, Tensor::zeros(&[m, 0])).unwrap()
}

pub fn to_dmatrix(t: &Tensor) -> DMatrix<f64> {
    DMatrix::from_row_slice(t.rows(), t.cols(), t.data())
}

fn param(store: &ParamStore, name: &str) -> DMatrix<f64> {
    let t = store.get(store.find(name).unwrap_or_else(|| panic!("no parameter {name}")));
    match t.shape() {
        [r, c] => DMatrix::from_row_slice(*r, *c, t.data()),
        [c] => DMatrix::from_row_slice(1, *c, t.data()),
        s => panic!("unexpected shape {s:?}"),
    }
}

fn affine(x: &DMatrix<f64>, w: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut y = x * w.transpose();
    for mut row in y.row_iter_mut() {
        row += b;
    }
    y
}

fn layer_norm(x: &DMatrix<f64>, gamma: &DMatrix<f64>, beta: &DMatrix<f64>) -> DMatrix<f64> {
    let mut y = x.clone();
    for mut row in y.row_iter_mut() {
        let d = row.len() as f64;
        let mean = row.sum() / d;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
        let inv = 1.0 / (var + 1e-5).sqrt();
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - mean) * inv * gamma[j] + beta[j];
        }
    }
    y
}

/// Dense multi-head attention layer with layer norm, evaluated with plain
/// matrix algebra: every node attends to every node, no clamping.
///
/// Returns the layer output and `weights[head][(i, j)]`, the weight node `i`
/// puts on node `j`.
pub fn dense_layer_oracle(
    store: &ParamStore,
    prefix: &str,
    cfg: &ModelConfig,
    h: &Tensor,
) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let h = to_dmatrix(h);
    let n = h.nrows();
    let p = |s: &str| param(store, &format!("{prefix}.{s}"));
    let q = affine(&h, &p("attn.query.weight"), &p("attn.query.bias"));
    let k = affine(&h, &p("attn.key.weight"), &p("attn.key.bias"));
    let v = affine(&h, &p("attn.value.weight"), &p("attn.value.bias"));
    let dk = cfg.head_dim();
    let mut heads = DMatrix::zeros(n, cfg.hidden_dim);
    let mut weights = Vec::new();
    for head in 0..cfg.num_heads {
        let cols = head * dk..(head + 1) * dk;
        let qh = q.columns(cols.start, dk);
        let kh = k.columns(cols.start, dk);
        let vh = v.columns(cols.start, dk);
        let mut a = (qh * kh.transpose()) / (dk as f64).sqrt();
        for mut row in a.row_iter_mut() {
            let max = row.max();
            row.iter_mut().for_each(|x| *x = (*x - max).exp());
            let s = row.sum();
            row /= s;
        }
        heads.columns_mut(cols.start, dk).copy_from(&(&a * vh));
        weights.push(a);
    }
    let update = affine(&heads, &p("out_nodes.weight"), &p("out_nodes.bias"));
    let h1 = layer_norm(&(h + update), &p("node.norm1.gamma"), &p("node.norm1.beta"));
    let mut wide = affine(&h1, &p("node.ffn1.weight"), &p("node.ffn1.bias"));
    wide.iter_mut().for_each(|x| *x = x.max(0.0));
    let ffn = affine(&wide, &p("node.ffn2.weight"), &p("node.ffn2.bias"));
    let out = layer_norm(&(&h1 + ffn), &p("node.norm2.gamma"), &p("node.norm2.beta"));
    (out, weights)
}

/// Sets every bias of `layer` to small nonzero values so the oracle
/// comparison exercises them.
pub fn randomize_biases<R: Rng>(store: &mut ParamStore, layer: &GtLayer, rng: &mut R) {
    for lin in [layer.query, layer.key, layer.value, layer.out_nodes] {
        let b = store.get_mut(lin.bias);
        b.data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-0.3..0.3));
    }
}

/// Union-find component count.
pub fn component_count(n: usize, edges: &[(usize, usize)]) -> usize {
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut count = n;
    for &(a, b) in edges {
        let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            count -= 1;
        }
    }
    count
}
