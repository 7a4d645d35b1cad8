//! Raw-feature, graph-level and node-level classifiers on FSBM mixtures.

use rayon::prelude::*;

use super::{generate_fsbm, FsbmConfig, FsbmMode};
use crate::dense::{FeatureMatrix, Matrix};
use crate::error::{Error, Result};
use crate::graph::{self_loop_adj, FilterPair};
use crate::harness::{make_splits, SplitSpec, DEFAULT_RATIOS};
use crate::localsim::SimilarityKind;
use crate::model::{self, adam_update, LocalSimMode, ModelConfig, ModelInput, TrainConfig, WeightMode};
use crate::propagation::{precompute_with_filters, PropagationConfig, Variant};

#[derive(Clone, Debug, PartialEq)]
pub struct ToyConfig {
    pub n: usize,
    pub expected_degree: f64,
    pub mode: FsbmMode,
    /// One graph and one split per seed.
    pub seeds: Vec<u64>,
    pub hidden: usize,
    pub h_alpha: usize,
    pub dropout: f64,
    pub train: TrainConfig,
    /// Epochs of the raw-feature logistic model.
    pub raw_epochs: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            expected_degree: 10.0,
            mode: FsbmMode::Bernoulli,
            seeds: (0..5).collect(),
            hidden: 16,
            h_alpha: 16,
            dropout: 0.0,
            train: TrainConfig {
                lr: 0.01,
                weight_decay: 5e-4,
                epochs: 300,
                patience: 100,
                seed: 0,
            },
            raw_epochs: 300,
        }
    }
}

/// Mean test accuracy of each method on one `(lambda_1, lambda_2)` cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyRow {
    pub lambda1: f64,
    pub lambda2: f64,
    pub raw: f64,
    pub graph_level: f64,
    pub node_level: f64,
    /// `[raw, graph_level, node_level]` per seed.
    pub per_seed: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyReport {
    pub rows: Vec<ToyRow>,
}

/// Multinomial logistic regression on `x` with a bias, trained full-batch
/// with Adam. Returns test accuracy of the epoch with the best validation
/// accuracy (ties to lower validation loss).
pub fn logistic_baseline(
    x: &FeatureMatrix,
    labels: &[usize],
    classes: usize,
    split: &SplitSpec,
    lr: f64,
    epochs: usize,
) -> Result<f64> {
    let n = x.rows();
    if labels.len() != n || split.train.len() != n {
        return Err(Error::input("labels and split must match the feature rows"));
    }
    let d = x.cols() + 1;
    let mut design = Matrix::zeros(n, d);
    for i in 0..n {
        let row = design.row_mut(i);
        row[..d - 1].copy_from_slice(x.row(i));
        row[d - 1] = 1.0;
    }
    let mut w = Matrix::zeros(d, classes);
    let mut m = vec![0.0; d * classes];
    let mut v = vec![0.0; d * classes];
    let train_count = split.train.iter().filter(|&&b| b).count().max(1) as f64;

    let eval = |w: &Matrix, mask: &[bool]| -> Result<(f64, f64)> {
        let logits = design.matmul(w)?;
        let (mut hit, mut total, mut loss) = (0usize, 0usize, 0.0);
        for i in (0..n).filter(|&i| mask[i]) {
            let row = logits.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[labels[i]];
            let mut best = 0;
            for c in 1..classes {
                if row[c] > row[best] {
                    best = c;
                }
            }
            hit += usize::from(best == labels[i]);
            total += 1;
        }
        Ok((hit as f64 / total.max(1) as f64, loss / total.max(1) as f64))
    };

    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    let mut best_w = w.clone();
    for step in 1..=epochs as i32 {
        let logits = design.matmul(&w)?;
        let mut d_logits = Matrix::zeros(n, classes);
        for i in (0..n).filter(|&i| split.train[i]) {
            let row = logits.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
            for c in 0..classes {
                let p = (row[c] - max).exp() / z;
                d_logits[(i, c)] = (p - f64::from(u8::from(c == labels[i]))) / train_count;
            }
        }
        let grad = design.transpose_matmul(&d_logits)?;
        adam_update(w.as_mut_slice(), grad.as_slice(), &mut m, &mut v, step, (lr, 0.9, 0.999, 1e-8));
        let (acc, loss) = eval(&w, &split.val)?;
        if acc > best.0 || (acc == best.0 && loss < best.1) {
            best = (acc, loss);
            best_w.clone_from(&w);
        }
    }
    Ok(eval(&best_w, &split.test)?.0)
}

fn run_seed(cfg: &ToyConfig, lambdas: (f64, f64), seed: u64) -> Result<[f64; 3]> {
    let fsbm = FsbmConfig::mixture(cfg.n, &[lambdas.0, lambdas.1], cfg.expected_degree, cfg.mode)?;
    let ds = generate_fsbm(&fsbm, seed)?;
    let split = make_splits(cfg.n, DEFAULT_RATIOS, seed, 1)?.remove(0);
    let raw = logistic_baseline(&ds.x, &ds.community, 2, &split, 0.05, cfg.raw_epochs)?;

    let prop = PropagationConfig {
        layers: 1,
        gamma: 0.5,
        beta: 0.0,
        variant: Variant::Irdc,
        normalize: false,
    };
    let filters = FilterPair::complement_of(self_loop_adj(&ds.graph), 0.0)?;
    let stack = precompute_with_filters(&filters, &ds.x, &prop)?;
    let input = ModelInput::new(&ds.graph, &ds.x, &stack, SimilarityKind::NegSqScalar)?;
    let tc = TrainConfig { seed, ..cfg.train };
    let mut acc = [raw, 0.0, 0.0];
    for (slot, weight_mode) in [(1, WeightMode::GraphLevel), (2, WeightMode::NodeLevel)] {
        let mc = ModelConfig {
            layers: 1,
            in_dim: 1,
            hidden: cfg.hidden,
            classes: 2,
            h_ls: 1,
            h_alpha: cfg.h_alpha,
            sim_kind: SimilarityKind::NegSqScalar,
            dropout: cfg.dropout,
            weight_mode,
            localsim_mode: LocalSimMode::Naive,
        };
        let out = model::train(&mc, &tc, &input, &ds.community, &split.train, &split.val)?;
        acc[slot] = model::evaluate(&out.params, &mc, &input, &ds.community, &split.test)?;
    }
    Ok(acc)
}

/// Trains the three classifiers on every grid cell and seed. Each seed
/// draws its own Bernoulli graph and a single 48/32/20 split. The learned
/// models use one residual-difference layer over `A + I` and its
/// complement, and the node-level model derives its weights from the naive
/// LocalSim with negative squared difference.
pub fn toy_study(grid: &[(f64, f64)], cfg: &ToyConfig) -> Result<ToyReport> {
    if cfg.seeds.is_empty() {
        return Err(Error::input("toy study needs at least one seed"));
    }
    let jobs: Vec<(usize, u64)> = (0..grid.len())
        .flat_map(|c| cfg.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(c, s)| run_seed(cfg, grid[c], s))
        .collect::<Result<Vec<_>>>()?;
    let k = cfg.seeds.len();
    let rows = grid
        .iter()
        .enumerate()
        .map(|(c, &(l1, l2))| {
            let per_seed = results[c * k..(c + 1) * k].to_vec();
            let mean = |m: usize| per_seed.iter().map(|a| a[m]).sum::<f64>() / k as f64;
            ToyRow {
                lambda1: l1,
                lambda2: l2,
                raw: mean(0),
                graph_level: mean(1),
                node_level: mean(2),
                per_seed,
            }
        })
        .collect();
    Ok(ToyReport { rows })
}
