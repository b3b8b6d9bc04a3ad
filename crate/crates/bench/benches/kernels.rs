use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use graphformer::model::PeInput;
use graphformer::pe::{normalized_laplacian, symmetric_eigendecompose, DEFAULT_TOL};
use graphformer::tensor::Mode;
use graphformer::{batch_graphs, GraphTransformer, ModelConfig, ParamStore, Tape};
use graphformer_bench::sbm_graph;

fn jacobi(c: &mut Criterion) {
    let mut group = c.benchmark_group("jacobi");
    for half in [8, 16, 32] {
        let lap = normalized_laplacian(&sbm_graph(half, 1)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(2 * half), &lap, |b, lap| {
            b.iter(|| symmetric_eigendecompose(black_box(lap), DEFAULT_TOL).unwrap())
        });
    }
    group.finish();
}

fn layer_pass(c: &mut Criterion) {
    let mut group = c.benchmark_group("gt_forward_backward");
    for half in [10, 40] {
        let g = sbm_graph(half, 2);
        let batch = batch_graphs([&g]).unwrap();
        let cfg = ModelConfig {
            num_layers: 2,
            num_heads: 4,
            hidden_dim: 32,
            ..ModelConfig::new(g.node_feature_dim(), 0)
        };
        let mut store = ParamStore::new();
        let mut model = GraphTransformer::new(cfg, &mut store, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        group.bench_function(BenchmarkId::from_parameter(2 * half), |b| {
            b.iter(|| {
                let mut tape = Tape::new();
                let bound = store.bind(&mut tape);
                let out = model.forward(&mut tape, &bound, &batch, &PeInput::None, Mode::Train).unwrap();
                let loss = tape.mean(out.nodes);
                tape.backward(loss).unwrap();
                black_box(bound.grads(&tape))
            })
        });
    }
    group.finish();
}

criterion_group!(benches, jacobi, layer_pass);
criterion_main!(benches);
