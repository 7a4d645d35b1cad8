mod common;

use common::{random_graph, random_labels, random_matrix};
use lsgnn::model::{
    evaluate, forward, load_checkpoint, predict, save_checkpoint, train, LocalSimMode, ModelConfig, ModelInput,
    ModelParameters, TrainConfig, WeightMode,
};
use lsgnn::propagation::precompute_bundle;
use lsgnn::{Matrix, PropagationConfig, SimilarityKind, SparseGraph};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn config(in_dim: usize, classes: usize, layers: usize) -> ModelConfig {
    ModelConfig {
        layers,
        in_dim,
        hidden: 8,
        classes,
        h_ls: 4,
        h_alpha: 4,
        sim_kind: SimilarityKind::Cosine,
        dropout: 0.3,
        weight_mode: WeightMode::NodeLevel,
        localsim_mode: LocalSimMode::Refined,
    }
}

fn masks(n: usize) -> (Vec<bool>, Vec<bool>) {
    let train = (0..n).map(|i| i % 5 < 3).collect();
    let val = (0..n).map(|i| i % 5 == 3).collect();
    (train, val)
}

#[test]
fn training_is_bitwise_deterministic() {
    let n = 40;
    let g = random_graph(n, 0.1, 3);
    let x = random_matrix(n, 5, 4);
    let labels = random_labels(n, 3, 5);
    let stack = precompute_bundle(&g, &x, &PropagationConfig { layers: 2, ..Default::default() }).unwrap();
    let cfg = config(5, 3, 2);
    let input = ModelInput::new(&g, &x, &stack, cfg.sim_kind).unwrap();
    let (tr, va) = masks(n);
    let tc = TrainConfig { epochs: 30, patience: 30, seed: 11, ..Default::default() };
    let a = train(&cfg, &tc, &input, &labels, &tr, &va).unwrap();
    let b = train(&cfg, &tc, &input, &labels, &tr, &va).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.history.len(), b.history.len());
    for (ra, rb) in a.history.iter().zip(&b.history) {
        assert_eq!(ra.train_loss.to_bits(), rb.train_loss.to_bits());
        assert_eq!(ra.val_loss.to_bits(), rb.val_loss.to_bits());
    }
    let c = train(&cfg, &TrainConfig { seed: 12, ..tc }, &input, &labels, &tr, &va).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn separable_blobs_are_fit() {
    let n = 80;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let mut x = Matrix::zeros(n, 4);
    for i in 0..n {
        let centre = if labels[i] == 0 { 3.0 } else { -3.0 };
        for c in 0..4 {
            let noise: f64 = StandardNormal.sample(&mut rng);
            x[(i, c)] = centre + noise;
        }
    }
    let g = random_graph(n, 0.05, 10);
    let stack = precompute_bundle(&g, &x, &PropagationConfig { layers: 2, ..Default::default() }).unwrap();
    let cfg = ModelConfig { dropout: 0.0, ..config(4, 2, 2) };
    let input = ModelInput::new(&g, &x, &stack, cfg.sim_kind).unwrap();
    let (tr, va) = masks(n);
    let tc = TrainConfig { epochs: 200, patience: 200, seed: 1, ..Default::default() };
    let out = train(&cfg, &tc, &input, &labels, &tr, &va).unwrap();
    let best_train = out.history.iter().map(|r| r.train_acc).fold(0.0, f64::max);
    assert!(best_train >= 0.99, "train accuracy {best_train}");
}

#[test]
fn patience_stops_and_restores_the_best_epoch() {
    let n = 60;
    let g = random_graph(n, 0.08, 21);
    let x = random_matrix(n, 3, 22);
    let labels = random_labels(n, 4, 23);
    let stack = precompute_bundle(&g, &x, &PropagationConfig { layers: 1, ..Default::default() }).unwrap();
    let cfg = config(3, 4, 1);
    let input = ModelInput::new(&g, &x, &stack, cfg.sim_kind).unwrap();
    let (tr, va) = masks(n);
    let tc = TrainConfig { epochs: 500, patience: 10, seed: 2, ..Default::default() };
    let out = train(&cfg, &tc, &input, &labels, &tr, &va).unwrap();
    assert_eq!(out.history.len(), (out.best_epoch + 11).min(tc.epochs));
    assert!(out.history.len() < tc.epochs, "random labels should trigger early stopping");
    let best = &out.history[out.best_epoch];
    assert_eq!(best.val_acc, out.best_val_acc);
    assert!(out.history.iter().all(|r| r.val_acc <= out.best_val_acc));
    assert_eq!(evaluate(&out.params, &cfg, &input, &labels, &va).unwrap(), out.best_val_acc);
}

#[test]
fn graph_level_equals_node_level_when_localsim_is_constant() {
    // Positive scalar features make every cosine similarity 1.
    let n = 25;
    let g = random_graph(n, 0.1, 31);
    let x = random_matrix(n, 1, 32).map(|v| v.abs() + 0.1);
    let stack = precompute_bundle(&g, &x, &PropagationConfig { layers: 3, ..Default::default() }).unwrap();
    let node_cfg = ModelConfig { dropout: 0.0, ..config(1, 3, 3) };
    let input = ModelInput::new(&g, &x, &stack, node_cfg.sim_kind).unwrap();
    let params = ModelParameters::init(&node_cfg, &mut ChaCha8Rng::seed_from_u64(4));
    let node = forward(&params, &node_cfg, &input, false, None).unwrap();
    assert!(node.phi.iter().all(|&p| (p - node.phi[0]).abs() < 1e-12));

    let graph_cfg = ModelConfig { weight_mode: WeightMode::GraphLevel, ..node_cfg };
    let mut gparams = params.clone();
    gparams.graph_alpha = Matrix::from_vec(1, node_cfg.alpha_width(), node.alpha.row(0).to_vec()).unwrap();
    let graph = forward(&gparams, &graph_cfg, &input, false, None).unwrap();
    assert!(graph.logits.max_abs_diff(&node.logits) < 1e-12);
}

#[test]
fn predictions_are_permutation_equivariant() {
    let n = 30;
    let g = random_graph(n, 0.12, 41);
    let x = random_matrix(n, 4, 42);
    let prop = PropagationConfig { layers: 2, ..Default::default() };
    let stack = precompute_bundle(&g, &x, &prop).unwrap();
    let cfg = ModelConfig { dropout: 0.0, ..config(4, 3, 2) };
    let params = ModelParameters::init(&cfg, &mut ChaCha8Rng::seed_from_u64(6));
    let base = predict(&params, &cfg, &ModelInput::new(&g, &x, &stack, cfg.sim_kind).unwrap()).unwrap();

    let order: Vec<usize> = (0..n).rev().map(|i| (i * 7) % n).collect();
    let pg: SparseGraph = g.permute(&order).unwrap();
    let px = x.select_rows(&order);
    let pstack = precompute_bundle(&pg, &px, &prop).unwrap();
    let perm = predict(&params, &cfg, &ModelInput::new(&pg, &px, &pstack, cfg.sim_kind).unwrap()).unwrap();
    assert!(perm.probs.max_abs_diff(&base.probs.select_rows(&order)) < 1e-12);
}

#[test]
fn checkpoint_file_reproduces_predictions() {
    let n = 20;
    let g = random_graph(n, 0.15, 51);
    let x = random_matrix(n, 3, 52);
    let stack = precompute_bundle(&g, &x, &PropagationConfig { layers: 2, ..Default::default() }).unwrap();
    let cfg = config(3, 2, 2);
    let params = ModelParameters::init(&cfg, &mut ChaCha8Rng::seed_from_u64(7));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.lspm");
    save_checkpoint(&path, &cfg, &params).unwrap();
    let (cfg2, params2) = load_checkpoint(&path).unwrap();
    assert_eq!(cfg2, cfg);
    let input = ModelInput::new(&g, &x, &stack, cfg.sim_kind).unwrap();
    let a = predict(&params, &cfg, &input).unwrap();
    let b = predict(&params2, &cfg2, &input).unwrap();
    assert_eq!(a.probs, b.probs);
}
