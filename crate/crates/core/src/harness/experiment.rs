use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::DatasetBundle;
use super::splits::SplitSpec;
use crate::error::{Error, Result};
use crate::localsim::SimilarityKind;
use crate::model::{self, LocalSimMode, ModelConfig, ModelInput, ModelParameters, TrainConfig, WeightMode};
use crate::propagation::{feature_digest, precompute_bundle, PropagationConfig, PropagationStack, Variant};

/// Everything one training run needs besides data and seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub layers: usize,
    pub gamma: f64,
    pub beta: f64,
    pub variant: Variant,
    pub normalize: bool,
    pub hidden: usize,
    pub h_ls: usize,
    pub h_alpha: usize,
    pub sim_kind: SimilarityKind,
    pub dropout: f64,
    pub weight_mode: WeightMode,
    pub localsim_mode: LocalSimMode,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub patience: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let prop = PropagationConfig::default();
        let tc = TrainConfig::default();
        Self {
            layers: prop.layers,
            gamma: prop.gamma,
            beta: prop.beta,
            variant: prop.variant,
            normalize: prop.normalize,
            hidden: 64,
            h_ls: 16,
            h_alpha: 16,
            sim_kind: SimilarityKind::Cosine,
            dropout: 0.5,
            weight_mode: WeightMode::NodeLevel,
            localsim_mode: LocalSimMode::Refined,
            lr: tc.lr,
            weight_decay: tc.weight_decay,
            epochs: tc.epochs,
            patience: tc.patience,
        }
    }
}

impl ExperimentConfig {
    pub fn propagation(&self) -> PropagationConfig {
        PropagationConfig {
            layers: self.layers,
            gamma: self.gamma,
            beta: self.beta,
            variant: self.variant,
            normalize: self.normalize,
        }
    }

    pub fn model(&self, in_dim: usize, classes: usize) -> ModelConfig {
        ModelConfig {
            layers: self.layers,
            in_dim,
            hidden: self.hidden,
            classes,
            h_ls: self.h_ls,
            h_alpha: self.h_alpha,
            sim_kind: self.sim_kind,
            dropout: self.dropout,
            weight_mode: self.weight_mode,
            localsim_mode: self.localsim_mode,
        }
    }

    pub fn train(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            epochs: self.epochs,
            patience: self.patience,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.propagation().validate()?;
        self.model(1, 1).validate()?;
        self.train(0).validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct CacheKey {
    graph: [u8; 32],
    features: [u8; 32],
    layers: usize,
    gamma: u64,
    beta: u64,
    variant: Variant,
    normalize: bool,
}

/// Propagation stacks keyed by graph digest, feature digest and
/// propagation settings. Each key is computed once.
#[derive(Default)]
pub struct PropagationCache {
    entries: Mutex<HashMap<CacheKey, Arc<PropagationStack>>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl PropagationCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_compute(&self, bundle: &DatasetBundle, cfg: &PropagationConfig) -> Result<Arc<PropagationStack>> {
        let key = CacheKey {
            graph: bundle.graph.digest(),
            features: feature_digest(&bundle.features),
            layers: cfg.layers,
            gamma: cfg.gamma.to_bits(),
            beta: cfg.beta.to_bits(),
            variant: cfg.variant,
            normalize: cfg.normalize,
        };
        // hold the lock while computing so concurrent callers never duplicate work
        let mut entries = self.entries.lock().expect("cache lock");
        if let Some(stack) = entries.get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            debug!("propagation cache hit");
            return Ok(Arc::clone(stack));
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let stack = Arc::new(precompute_bundle(&bundle.graph, &bundle.features, cfg)?);
        entries.insert(key, Arc::clone(&stack));
        Ok(stack)
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitResult {
    pub split: usize,
    pub seed: u64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub per_split: Vec<SplitResult>,
    /// Mean test accuracy.
    pub mean: f64,
    /// Population standard deviation of test accuracy.
    pub std: f64,
    pub val_mean: f64,
    pub config: ExperimentConfig,
    pub seconds: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Trained parameters of every split alongside the report.
pub struct TrainedRun {
    pub report: MetricsReport,
    pub model: ModelConfig,
    pub params: Vec<ModelParameters>,
}

/// Precomputes (or fetches) the propagation stack, then trains and
/// evaluates one model per split. Split `i` trains with seed `splits[i].seed`.
pub fn train_splits(
    bundle: &DatasetBundle,
    cfg: &ExperimentConfig,
    splits: &[SplitSpec],
    cache: &PropagationCache,
) -> Result<TrainedRun> {
    cfg.validate()?;
    if splits.is_empty() {
        return Err(Error::input("need at least one split"));
    }
    if let Some(s) = splits.iter().find(|s| s.train.len() != bundle.n()) {
        return Err(Error::input(format!(
            "split {} covers {} nodes, dataset has {}",
            s.seed,
            s.train.len(),
            bundle.n()
        )));
    }
    let start = Instant::now();
    let stack = cache.get_or_compute(bundle, &cfg.propagation())?;
    let mc = cfg.model(bundle.features.cols(), bundle.classes);
    let input = ModelInput::new(&bundle.graph, &bundle.features, &stack, cfg.sim_kind)?;
    let outcomes = splits
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let out = model::train(&mc, &cfg.train(s.seed), &input, &bundle.labels, &s.train, &s.val)?;
            let test_acc = model::evaluate(&out.params, &mc, &input, &bundle.labels, &s.test)?;
            let result = SplitResult {
                split: i,
                seed: s.seed,
                val_acc: out.best_val_acc,
                test_acc,
                best_epoch: out.best_epoch,
                epochs_run: out.history.len(),
            };
            Ok((result, out.params))
        })
        .collect::<Result<Vec<_>>>()?;
    let (per_split, params): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
    let (mean, std) = mean_std(&per_split.iter().map(|r| r.test_acc).collect::<Vec<_>>());
    let (val_mean, _) = mean_std(&per_split.iter().map(|r| r.val_acc).collect::<Vec<_>>());
    let report = MetricsReport {
        per_split,
        mean,
        std,
        val_mean,
        config: *cfg,
        seconds: start.elapsed().as_secs_f64(),
    };
    info!(
        "K={} variant={} mean test accuracy {:.4} +/- {:.4}",
        cfg.layers, cfg.variant, report.mean, report.std
    );
    Ok(TrainedRun {
        report,
        model: mc,
        params,
    })
}

pub fn run_experiment(
    bundle: &DatasetBundle,
    cfg: &ExperimentConfig,
    splits: &[SplitSpec],
    cache: &PropagationCache,
) -> Result<MetricsReport> {
    Ok(train_splits(bundle, cfg, splits, cache)?.report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DepthRow {
    pub layers: usize,
    pub lsgnn: MetricsReport,
    /// Same head fed by plain repeated filtering.
    pub sgc: MetricsReport,
}

/// One experiment per depth for `base` and for its `sgc` counterpart, on
/// shared splits.
pub fn depth_sweep(
    bundle: &DatasetBundle,
    base: &ExperimentConfig,
    depths: &[usize],
    splits: &[SplitSpec],
    cache: &PropagationCache,
) -> Result<Vec<DepthRow>> {
    if depths.is_empty() {
        return Err(Error::input("depth sweep needs at least one depth"));
    }
    depths
        .iter()
        .map(|&k| {
            let cfg = ExperimentConfig { layers: k, ..*base };
            let sgc = ExperimentConfig {
                variant: Variant::Sgc,
                ..cfg
            };
            Ok(DepthRow {
                layers: k,
                lsgnn: run_experiment(bundle, &cfg, splits, cache)?,
                sgc: run_experiment(bundle, &sgc, splits, cache)?,
            })
        })
        .collect()
}
