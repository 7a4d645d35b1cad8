#![allow(dead_code)]

use lsgnn::model::{LocalSimMode, ModelConfig, ModelParameters, WeightMode};
use lsgnn::{Matrix, PropagationStack, SimilarityKind, SparseGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Erdos-Renyi graph with a ring added so no node is isolated.
pub fn random_graph(n: usize, p: f64, seed: u64) -> SparseGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    SparseGraph::from_edges(&edges, n).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn random_labels(n: usize, classes: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| if i < classes { i } else { rng.random_range(0..classes) }).collect()
}

pub fn dense_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols(), b.rows());
    let mut out = Matrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut s = 0.0;
            for t in 0..a.cols() {
                s += a[(i, t)] * b[(t, j)];
            }
            out[(i, j)] = s;
        }
    }
    out
}

/// Records which side of zero every ReLU input fell on.
#[derive(Default, PartialEq)]
pub struct ReluPattern(Vec<bool>);

impl ReluPattern {
    fn relu(&mut self, v: f64) -> f64 {
        self.0.push(v > 0.0);
        v.max(0.0)
    }
}

/// `affine -> ReLU -> affine` on a single input row.
fn mlp_row(w1: &Matrix, b1: &Matrix, w2: &Matrix, b2: &Matrix, input: &[f64], pat: &mut ReluPattern) -> Vec<f64> {
    let hidden: Vec<f64> = (0..w1.cols())
        .map(|h| pat.relu(b1[(0, h)] + input.iter().enumerate().map(|(t, &x)| x * w1[(t, h)]).sum::<f64>()))
        .collect();
    (0..w2.cols())
        .map(|o| b2[(0, o)] + hidden.iter().enumerate().map(|(h, &v)| v * w2[(h, o)]).sum::<f64>())
        .collect()
}

pub fn reference_similarity(a: &[f64], b: &[f64], kind: SimilarityKind) -> f64 {
    match kind {
        SimilarityKind::Cosine => {
            let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
            }
        }
        SimilarityKind::Euclidean => -a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt(),
        SimilarityKind::NegSqScalar => -(a[0] - b[0]).powi(2),
    }
}

/// Loop-level re-derivation of the head's logits, written without the
/// library's matrix kernels.
pub fn reference_logits(
    p: &ModelParameters,
    cfg: &ModelConfig,
    g: &SparseGraph,
    x: &Matrix,
    stack: &PropagationStack,
) -> Matrix {
    reference_logits_with_pattern(p, cfg, g, x, stack, &mut ReluPattern::default())
}

pub fn reference_logits_with_pattern(
    p: &ModelParameters,
    cfg: &ModelConfig,
    g: &SparseGraph,
    x: &Matrix,
    stack: &PropagationStack,
    pat: &mut ReluPattern,
) -> Matrix {
    let n = g.n();
    let (k, z) = (cfg.layers, cfg.hidden);
    let mut relu_all = |m: Matrix| {
        let mut m = m;
        for v in m.as_mut_slice() {
            *v = pat.relu(*v);
        }
        m
    };
    let h_id = relu_all(dense_matmul(x, &p.w_identity));
    let h_low: Vec<Matrix> = (0..k).map(|l| relu_all(dense_matmul(&stack.low_layers[l], &p.w_low[l]))).collect();
    let h_high: Vec<Matrix> = (0..k).map(|l| relu_all(dense_matmul(&stack.high_layers[l], &p.w_high[l]))).collect();

    let alpha: Vec<Vec<f64>> = match cfg.weight_mode {
        WeightMode::GraphLevel => vec![p.graph_alpha.row(0).to_vec(); n],
        WeightMode::NodeLevel => (0..n)
            .map(|i| {
                let nb = g.neighbors(i);
                let phi = if nb.is_empty() {
                    0.0
                } else {
                    nb.iter()
                        .map(|&j| {
                            let d = reference_similarity(x.row(i), x.row(j), cfg.sim_kind);
                            match cfg.localsim_mode {
                                LocalSimMode::Naive => d,
                                LocalSimMode::Refined => {
                                    let m = &p.mlp_ls;
                                    mlp_row(&m.w1, &m.b1, &m.w2, &m.b2, &[d, d * d], pat)[0]
                                }
                            }
                        })
                        .sum::<f64>()
                        / nb.len() as f64
                };
                let m = &p.mlp_alpha;
                mlp_row(&m.w1, &m.b1, &m.w2, &m.b2, &[phi, phi * phi], pat)
            })
            .collect(),
    };

    let mut rep = Matrix::zeros(n, (k + 1) * z);
    for i in 0..n {
        for c in 0..z {
            rep[(i, c)] = h_id[(i, c)];
        }
        for l in 0..k {
            let a = &alpha[i];
            for c in 0..z {
                rep[(i, (l + 1) * z + c)] =
                    a[l] * h_id[(i, c)] + a[k + l] * h_low[l][(i, c)] + a[2 * k + l] * h_high[l][(i, c)];
            }
        }
    }
    dense_matmul(&rep, &p.w_out)
}

/// Masked mean cross-entropy plus half the decay times the squared norm of
/// the tensors the configuration reads.
pub fn reference_loss(
    p: &ModelParameters,
    cfg: &ModelConfig,
    g: &SparseGraph,
    x: &Matrix,
    stack: &PropagationStack,
    labels: &[usize],
    mask: &[bool],
    weight_decay: f64,
) -> f64 {
    reference_loss_with_pattern(p, cfg, g, x, stack, labels, mask, weight_decay, &mut ReluPattern::default())
}

pub fn reference_loss_with_pattern(
    p: &ModelParameters,
    cfg: &ModelConfig,
    g: &SparseGraph,
    x: &Matrix,
    stack: &PropagationStack,
    labels: &[usize],
    mask: &[bool],
    weight_decay: f64,
    pat: &mut ReluPattern,
) -> f64 {
    let logits = reference_logits_with_pattern(p, cfg, g, x, stack, pat);
    let mut ce = 0.0;
    let mut count = 0;
    for i in 0..g.n() {
        if !mask[i] {
            continue;
        }
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        ce += lse - row[labels[i]];
        count += 1;
    }
    let data = if count == 0 { 0.0 } else { ce / count as f64 };

    let node = cfg.weight_mode == WeightMode::NodeLevel;
    let refined = node && cfg.localsim_mode == LocalSimMode::Refined;
    let sq = |m: &Matrix| m.as_slice().iter().map(|v| v * v).sum::<f64>();
    let mut reg = sq(&p.w_identity) + sq(&p.w_out);
    reg += p.w_low.iter().chain(&p.w_high).map(sq).sum::<f64>();
    if refined {
        reg += [&p.mlp_ls.w1, &p.mlp_ls.b1, &p.mlp_ls.w2, &p.mlp_ls.b2].into_iter().map(sq).sum::<f64>();
    }
    if node {
        reg += [&p.mlp_alpha.w1, &p.mlp_alpha.b1, &p.mlp_alpha.w2, &p.mlp_alpha.b2].into_iter().map(sq).sum::<f64>();
    } else {
        reg += sq(&p.graph_alpha);
    }
    data + 0.5 * weight_decay * reg
}

pub const ALL_MODES: [(WeightMode, LocalSimMode); 3] = [
    (WeightMode::NodeLevel, LocalSimMode::Refined),
    (WeightMode::NodeLevel, LocalSimMode::Naive),
    (WeightMode::GraphLevel, LocalSimMode::Refined),
];

pub struct GradCheck {
    /// Largest relative error over every coordinate and mode.
    pub max_rel_err: f64,
    /// Largest gap between library loss and the reference loss.
    pub max_loss_gap: f64,
    pub coordinates: usize,
    /// Coordinates whose step had to shrink to avoid a ReLU kink.
    pub shrunk: usize,
}

pub const FD_STEP: f64 = 1e-5;
const MIN_FD_STEP: f64 = 1e-8;

/// Central differences of the reference loss against the library's analytic
/// gradient on an `n=30, d=8, K=2, z=4` instance.
pub fn gradient_check(seed: u64) -> GradCheck {
    use lsgnn::model::{loss_and_gradients, ModelInput};
    use lsgnn::propagation::precompute_bundle;
    use lsgnn::{PropagationConfig, Variant};

    let (n, d, k, z, classes) = (30, 8, 2, 4, 3);
    let g = random_graph(n, 0.12, seed);
    let x = random_matrix(n, d, seed.wrapping_add(1000));
    let labels = random_labels(n, classes, seed.wrapping_add(2000));
    let mask: Vec<bool> = (0..n).map(|i| i % 3 != 2).collect();
    let prop = PropagationConfig { layers: k, gamma: 0.4, beta: 0.3, variant: Variant::Irdc, normalize: false };
    let stack = precompute_bundle(&g, &x, &prop).unwrap();
    let wd = 5e-3;

    let mut out = GradCheck { max_rel_err: 0.0, max_loss_gap: 0.0, coordinates: 0, shrunk: 0 };
    for (mode_ix, &(weight_mode, localsim_mode)) in ALL_MODES.iter().enumerate() {
        let cfg = ModelConfig {
            layers: k,
            in_dim: d,
            hidden: z,
            classes,
            h_ls: 4,
            h_alpha: 4,
            sim_kind: SimilarityKind::Cosine,
            dropout: 0.0,
            weight_mode,
            localsim_mode,
        };
        let input = ModelInput::new(&g, &x, &stack, cfg.sim_kind).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed * 31 + mode_ix as u64);
        let params = ModelParameters::init(&cfg, &mut rng);
        let lg = loss_and_gradients(&params, &cfg, &input, &labels, &mask, wd, true, None).unwrap();
        let reference = reference_loss(&params, &cfg, &g, &x, &stack, &labels, &mask, wd);
        out.max_loss_gap = out.max_loss_gap.max((lg.loss - reference).abs());

        let analytic = lg.grads.to_flat();
        let base = params.to_flat();
        let mut probe = params.clone();
        for (c, &a) in analytic.iter().enumerate() {
            // Central differences are only meaningful when both probes see
            // the same ReLU pattern; shrink the step until they do.
            let mut step = FD_STEP;
            let numeric = loop {
                let mut eval = |delta: f64| {
                    let mut shifted = base.clone();
                    shifted[c] += delta;
                    probe.set_flat(&shifted).unwrap();
                    let mut pat = ReluPattern::default();
                    let l = reference_loss_with_pattern(&probe, &cfg, &g, &x, &stack, &labels, &mask, wd, &mut pat);
                    (l, pat)
                };
                let (up, pat_up) = eval(step);
                let (down, pat_down) = eval(-step);
                if pat_up == pat_down || step < MIN_FD_STEP {
                    if step < FD_STEP {
                        out.shrunk += 1;
                    }
                    break (up - down) / (2.0 * step);
                }
                step /= 10.0;
            };
            let scale = a.abs().max(numeric.abs()).max(1e-8);
            out.max_rel_err = out.max_rel_err.max((a - numeric).abs() / scale);
            out.coordinates += 1;
        }
    }
    out
}

pub struct FsbmStructure {
    pub cross_edges: usize,
    pub mean_degree: f64,
    /// Mean node homophily per subgraph over nodes with neighbors.
    pub homophily: Vec<f64>,
}

pub fn fsbm_structure(ds: &lsgnn::synthetic::SyntheticDataset, subgraphs: usize) -> FsbmStructure {
    let g = &ds.graph;
    let cross_edges = g.undirected_edges().filter(|&(u, v)| ds.subgraph_id[u] != ds.subgraph_id[v]).count();
    let mean_degree = 2.0 * g.edge_count() as f64 / g.n() as f64;
    let per_node = lsgnn::graph::node_homophily(g, &ds.community).unwrap().per_node;
    let homophily = (0..subgraphs)
        .map(|t| {
            let nodes: Vec<usize> = ds.nodes_in_subgraph(t).filter(|&i| g.degree(i) > 0).collect();
            nodes.iter().map(|&i| per_node[i]).sum::<f64>() / nodes.len() as f64
        })
        .collect();
    FsbmStructure { cross_edges, mean_degree, homophily }
}

pub fn run_cli(args: &[&str]) {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_lsgnn")).args(args).output().expect("spawn lsgnn");
    assert!(out.status.success(), "lsgnn {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

/// Runs `args` into `dir/first`, replays `dir/first/manifest.txt` into
/// `dir/replay`, and reports whether the two `report.csv` files are
/// byte-identical.
pub fn replay_is_identical(dir: &std::path::Path, command: &str, args: &[&str]) -> bool {
    let first = dir.join(format!("{command}-first"));
    let replay = dir.join(format!("{command}-replay"));
    let mut full = vec![command, "--out", first.to_str().unwrap()];
    full.extend_from_slice(args);
    run_cli(&full);
    let manifest = first.join("manifest.txt");
    run_cli(&["--config", manifest.to_str().unwrap(), "--out", replay.to_str().unwrap(), command]);
    let a = std::fs::read(first.join("report.csv")).unwrap();
    let b = std::fs::read(replay.join("report.csv")).unwrap();
    !a.is_empty() && a == b
}
