//! Property tests for structural invariants across modules.

mod common;

use graphformer::config::{DatasetSpec, ExperimentConfig, TaskKind};
use graphformer::pe::random_sign_flip;
use graphformer::tensor::Tape;
use graphformer::{batch_graphs, build_graph, lap_pe, wl_roles, Graph, PeKind, SbmParams, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn graph_strategy(max_n: usize) -> impl Strategy<Value = Graph> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n), 0..3 * n).prop_map(move |edges| {
            let m = edges.len();
            let nf = Tensor::matrix(n, 2, (0..2 * n).map(|i| i as f64).collect()).unwrap();
            let ef = Tensor::matrix(m, 1, (0..m).map(|e| e as f64).collect()).unwrap();
            build_graph(n, &edges, nf, ef).unwrap()
        })
    })
}

fn undirected_strategy(max_n: usize) -> impl Strategy<Value = Graph> {
    (2..=max_n, any::<u64>(), 0.05f64..0.8).prop_map(|(n, seed, p)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        common::random_undirected(&mut rng, n, p, 1, 0)
    })
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csr_round_trips_edges(g in graph_strategy(12)) {
        let offsets = g.csr_offsets();
        prop_assert_eq!(offsets.len(), g.num_nodes() + 1);
        prop_assert!(offsets.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(*offsets.last().unwrap(), g.num_edges());
        let mut ids = g.edge_ids().to_vec();
        ids.sort_unstable();
        prop_assert_eq!(ids, (0..g.num_edges()).collect::<Vec<_>>());
        let (src, dst) = g.slot_endpoints();
        for (s, (&j, &i)) in src.iter().zip(&dst).enumerate() {
            prop_assert_eq!(g.edges()[g.edge_ids()[s]], (j, i));
            // edge feature rows follow their edge id
            prop_assert_eq!(g.edge_features().get(g.edge_ids()[s], 0), g.edge_ids()[s] as f64);
        }
    }

    #[test]
    fn batching_keeps_graphs_disjoint(gs in prop::collection::vec(graph_strategy(8), 1..5)) {
        let batch = batch_graphs(&gs).unwrap();
        let merged = batch.graph();
        prop_assert_eq!(merged.num_nodes(), gs.iter().map(Graph::num_nodes).sum::<usize>());
        prop_assert_eq!(merged.num_edges(), gs.iter().map(Graph::num_edges).sum::<usize>());
        for (k, g) in gs.iter().enumerate() {
            let nodes = batch.node_range(k);
            let off = nodes.start;
            let sub: Vec<_> = merged.edges()[batch.edge_range(k)].to_vec();
            let want: Vec<_> = g.edges().into_iter().map(|(s, d)| (s + off, d + off)).collect();
            prop_assert_eq!(sub, want);
            for i in nodes {
                prop_assert_eq!(batch.graph_of_node()[i], k);
                prop_assert_eq!(merged.node_features().row(i), g.node_features().row(i - off));
            }
        }
    }

    #[test]
    fn relabel_preserves_degrees(g in graph_strategy(10).prop_flat_map(|g| { let n = g.num_nodes(); (Just(g), permutation(n)) })) {
        let (g, perm) = g;
        let h = g.relabel(&perm);
        for i in 0..g.num_nodes() {
            prop_assert_eq!(g.in_degree(i), h.in_degree(perm[i]));
        }
    }

    #[test]
    fn segment_softmax_is_a_distribution(
        vals in prop::collection::vec(-50.0f64..50.0, 1..40),
        segs in prop::collection::vec(0usize..5, 40),
    ) {
        let n = vals.len();
        let seg = &segs[..n];
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(n, 1, vals).unwrap());
        let w = tape.segment_softmax(x, seg, 5).unwrap();
        let w = tape.value(w);
        let mut sums = [0.0; 5];
        for (r, &s) in seg.iter().enumerate() {
            prop_assert!(w.get(r, 0) > 0.0 && w.get(r, 0) <= 1.0);
            sums[s] += w.get(r, 0);
        }
        for s in 0..5 {
            if seg.contains(&s) {
                prop_assert!((sums[s] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sign_flip_only_changes_signs(g in undirected_strategy(14), seed in any::<u64>()) {
        let pe = lap_pe(&g, 3).unwrap();
        let flipped = random_sign_flip(&pe, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(&flipped.eigenvalues, &pe.eigenvalues);
        for c in 0..3 {
            let same = (0..g.num_nodes()).all(|i| flipped.encodings.get(i, c) == pe.encodings.get(i, c));
            let negated = (0..g.num_nodes()).all(|i| flipped.encodings.get(i, c) == -pe.encodings.get(i, c));
            prop_assert!(same || negated);
        }
    }

    #[test]
    fn lap_pe_columns_are_orthonormal(g in undirected_strategy(14)) {
        let pe = lap_pe(&g, 4).unwrap();
        let n = g.num_nodes();
        prop_assert!(pe.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        for a in 0..pe.eigenvalues.len() {
            for b in 0..pe.eigenvalues.len() {
                let dot: f64 = (0..n).map(|i| pe.encodings.get(i, a) * pe.encodings.get(i, b)).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                prop_assert!((dot - want).abs() < 1e-8);
            }
        }
        // padding columns stay zero
        for c in pe.eigenvalues.len()..4 {
            prop_assert!((0..n).all(|i| pe.encodings.get(i, c) == 0.0));
        }
    }

    #[test]
    fn wl_partition_is_relabel_invariant(g in undirected_strategy(12).prop_flat_map(|g| { let n = g.num_nodes(); (Just(g), permutation(n)) })) {
        let (g, perm) = g;
        let a = wl_roles(&g, 3);
        let b = wl_roles(&g.relabel(&perm), 3);
        prop_assert_eq!(a.num_roles, b.num_roles);
        for i in 0..g.num_nodes() {
            for j in 0..g.num_nodes() {
                prop_assert_eq!(a.role_id[i] == a.role_id[j], b.role_id[perm[i]] == b.role_id[perm[j]]);
            }
        }
    }

    #[test]
    fn densify_is_complete(g in graph_strategy(9)) {
        let d = g.densify();
        let n = g.num_nodes();
        prop_assert_eq!(d.num_edges(), n * (n - 1));
        prop_assert!((0..n).all(|i| d.in_degree(i) == n - 1 && !d.in_neighbors(i).contains(&i)));
        prop_assert_eq!(d.edge_feature_dim(), 0);
    }
}

#[test]
fn config_text_round_trips() {
    let mut cfg = ExperimentConfig::new(
        TaskKind::NodeClassification,
        DatasetSpec::Sbm {
            num_graphs: 7,
            params: SbmParams::new(vec![5, 6, 7], 0.7, 0.05, 0.25),
        },
    );
    cfg.model.pe_kind = PeKind::Laplacian { k: 6 };
    cfg.seeds = vec![3, 9];
    cfg.weighted_accuracy = true;
    cfg.schedule.patience = 11;
    let text = cfg.to_flat_string();
    assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
}

#[test]
fn config_reports_every_problem_at_once() {
    let err = ExperimentConfig::parse("task = node_classification\ndataset = sbm\nmodel.hidden_dim = 30\nmodel.num_heads = 4\nbogus = 1\nseeds = \n")
        .unwrap_err();
    let text = err.to_string();
    assert!(text.contains("bogus"), "{text}");
    assert!(text.contains("hidden_dim"), "{text}");
    assert!(err.problems.len() >= 3, "{text}");
}
