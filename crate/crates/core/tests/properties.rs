mod common;

use lsgnn::graph::{enhanced_filters, node_homophily, sym_norm_adj};
use lsgnn::localsim::naive_localsim;
use lsgnn::model::{forward, ModelConfig, ModelInput, ModelParameters, WeightMode};
use lsgnn::propagation::{irdc, precompute_bundle};
use lsgnn::{Matrix, PropagationConfig, SimilarityKind, SparseGraph, Variant};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn graph_strategy() -> impl Strategy<Value = SparseGraph> {
    (2usize..24).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n), 0..80)
            .prop_map(move |edges| SparseGraph::from_edges(&edges, n).unwrap())
    })
}

fn graph_and_perm() -> impl Strategy<Value = (SparseGraph, Vec<usize>)> {
    graph_strategy().prop_flat_map(|g| {
        let n = g.n();
        (Just(g), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
    })
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

fn rel_gap(a: &Matrix, b: &Matrix) -> f64 {
    a.max_abs_diff(b) / a.max_abs().max(b.max_abs()).max(1.0)
}

proptest! {
    #[test]
    fn adjacency_is_symmetric_without_self_loops(g in graph_strategy()) {
        let mut entries = 0;
        for i in 0..g.n() {
            let nb = g.neighbors(i);
            prop_assert!(nb.windows(2).all(|w| w[0] < w[1]));
            for &j in nb {
                prop_assert!(j != i);
                prop_assert!(g.has_edge(j, i));
                entries += 1;
            }
        }
        prop_assert_eq!(entries, 2 * g.edge_count());
        let s = sym_norm_adj(&g).to_dense();
        prop_assert!(s.max_abs_diff(&s.transpose()) == 0.0);
    }

    #[test]
    fn filters_are_complementary(g in graph_strategy(), beta in 0.0f64..=1.0) {
        let f = enhanced_filters(&g, beta).unwrap();
        let sum = f.low.to_dense().add(&f.high.to_dense()).unwrap();
        prop_assert!(sum.max_abs_diff(&Matrix::identity(g.n())) <= 1e-12);
    }

    #[test]
    fn homophily_is_permutation_equivariant((g, order) in graph_and_perm(), seed in any::<u64>()) {
        let labels = common::random_labels(g.n(), 3.min(g.n()), seed);
        let h = node_homophily(&g, &labels).unwrap();
        let pg = g.permute(&order).unwrap();
        let plabels: Vec<usize> = order.iter().map(|&o| labels[o]).collect();
        let ph = node_homophily(&pg, &plabels).unwrap();
        for (new, &old) in order.iter().enumerate() {
            prop_assert!((ph.per_node[new] - h.per_node[old]).abs() <= 1e-12);
        }
        prop_assert!((ph.graph_level - h.graph_level).abs() <= 1e-12);
    }

    #[test]
    fn irdc_is_linear(
        (g, x, y) in graph_strategy().prop_flat_map(|g| { let n = g.n(); (Just(g), matrix(n, 3), matrix(n, 3)) }),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        gamma in 0.0f64..=1.0,
        layers in 1usize..5,
    ) {
        let f = enhanced_filters(&g, 0.5).unwrap();
        let mut mix = x.scale(a);
        mix.axpy(b, &y).unwrap();
        let lhs = irdc(&f.low, &mix, layers, gamma).unwrap();
        let px = irdc(&f.low, &x, layers, gamma).unwrap();
        let py = irdc(&f.low, &y, layers, gamma).unwrap();
        for l in 0..layers {
            let mut rhs = px[l].scale(a);
            rhs.axpy(b, &py[l]).unwrap();
            prop_assert!(rel_gap(&lhs[l], &rhs) <= 1e-10);
        }
    }

    #[test]
    fn propagation_is_permutation_equivariant(
        ((g, order), x) in graph_and_perm().prop_flat_map(|(g, o)| { let n = g.n(); (Just((g, o)), matrix(n, 2)) }),
        gamma in 0.0f64..=1.0,
        normalize in any::<bool>(),
    ) {
        let cfg = PropagationConfig { layers: 3, gamma, beta: 0.4, variant: Variant::Irdc, normalize };
        let stack = precompute_bundle(&g, &x, &cfg).unwrap();
        let pstack = precompute_bundle(&g.permute(&order).unwrap(), &x.select_rows(&order), &cfg).unwrap();
        let expect = stack.permute_rows(&order);
        for l in 0..3 {
            prop_assert!(rel_gap(&pstack.low_layers[l], &expect.low_layers[l]) <= 1e-12);
            prop_assert!(rel_gap(&pstack.high_layers[l], &expect.high_layers[l]) <= 1e-12);
        }
    }

    #[test]
    fn naive_localsim_respects_measure_bounds(
        (g, x) in graph_strategy().prop_flat_map(|g| { let n = g.n(); (Just(g), matrix(n, 4)) }),
    ) {
        let cos = naive_localsim(&g, &x, SimilarityKind::Cosine).unwrap();
        prop_assert!(cos.phi.iter().all(|&v| (-1.0..=1.0).contains(&v)));
        let euc = naive_localsim(&g, &x, SimilarityKind::Euclidean).unwrap();
        prop_assert!(euc.phi.iter().all(|&v| v <= 0.0));
        let scalar = x.select_rows(&(0..g.n()).collect::<Vec<_>>());
        let one = Matrix::from_vec(g.n(), 1, scalar.column(0)).unwrap();
        let sq = naive_localsim(&g, &one, SimilarityKind::NegSqScalar).unwrap();
        prop_assert!(sq.phi.iter().all(|&v| v <= 0.0));
        for i in 0..g.n() {
            if g.degree(i) == 0 {
                prop_assert_eq!(cos.phi[i], 0.0);
            }
        }
    }

    #[test]
    fn predictions_are_distributions_matching_logit_argmax(
        (g, x) in graph_strategy().prop_flat_map(|g| { let n = g.n(); (Just(g), matrix(n, 3)) }),
        seed in any::<u64>(),
        graph_level in any::<bool>(),
    ) {
        let prop_cfg = PropagationConfig { layers: 2, ..PropagationConfig::default() };
        let stack = precompute_bundle(&g, &x, &prop_cfg).unwrap();
        let cfg = ModelConfig {
            layers: 2,
            in_dim: 3,
            hidden: 5,
            classes: 4,
            h_ls: 3,
            h_alpha: 3,
            sim_kind: SimilarityKind::Cosine,
            dropout: 0.0,
            weight_mode: if graph_level { WeightMode::GraphLevel } else { WeightMode::NodeLevel },
            localsim_mode: lsgnn::model::LocalSimMode::Refined,
        };
        let params = ModelParameters::init(&cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        let input = ModelInput::new(&g, &x, &stack, cfg.sim_kind).unwrap();
        let fwd = forward(&params, &cfg, &input, false, None).unwrap();
        let picked = fwd.prediction.argmax();
        for i in 0..g.n() {
            let row = fwd.prediction.probs.row(i);
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let logits = fwd.logits.row(i);
            let best = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(logits[picked[i]], best);
        }
    }
}
