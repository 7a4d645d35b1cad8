use log::warn;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::DatasetBundle;
use super::experiment::{run_experiment, ExperimentConfig, MetricsReport, PropagationCache};
use super::splits::SplitSpec;
use crate::error::{Error, Result};
use crate::localsim::SimilarityKind;

pub const DEFAULT_BUDGET: usize = 200;

/// Hyperparameter domains: log-uniform ranges and finite choice sets.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpace {
    pub lr: (f64, f64),
    pub weight_decay: (f64, f64),
    pub dropout: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub sim_kind: Vec<SimilarityKind>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        let grid = vec![0.1, 0.3, 0.5, 0.7, 0.9, 1.0];
        Self {
            lr: (1e-3, 1e-1),
            weight_decay: (1e-6, 1e-1),
            dropout: vec![0.1, 0.5, 0.6, 0.7, 0.8, 0.9],
            beta: grid.clone(),
            gamma: grid,
            sim_kind: vec![SimilarityKind::Cosine, SimilarityKind::Euclidean],
        }
    }
}

fn log_uniform(range: (f64, f64), rng: &mut impl Rng) -> f64 {
    let (lo, hi) = (range.0.ln(), range.1.ln());
    (lo + (hi - lo) * rng.random::<f64>()).exp()
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("lr", self.lr), ("weight_decay", self.weight_decay)] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::input(format!("{name} range must be positive and ordered")));
            }
        }
        if self.dropout.is_empty() || self.beta.is_empty() || self.gamma.is_empty() || self.sim_kind.is_empty() {
            return Err(Error::input("search space choice sets must be nonempty"));
        }
        Ok(())
    }

    /// Draws one configuration; fields outside the space come from `base`.
    pub fn sample(&self, base: &ExperimentConfig, rng: &mut impl Rng) -> ExperimentConfig {
        ExperimentConfig {
            lr: log_uniform(self.lr, rng),
            weight_decay: log_uniform(self.weight_decay, rng),
            dropout: *self.dropout.choose(rng).expect("nonempty"),
            beta: *self.beta.choose(rng).expect("nonempty"),
            gamma: *self.gamma.choose(rng).expect("nonempty"),
            sim_kind: *self.sim_kind.choose(rng).expect("nonempty"),
            ..*base
        }
    }

    /// The first `budget` samples of the sequence seeded by `seed`.
    pub fn samples(&self, base: &ExperimentConfig, budget: usize, seed: u64) -> Vec<ExperimentConfig> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..budget).map(|_| self.sample(base, &mut rng)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub index: usize,
    pub config: ExperimentConfig,
    /// `None` when the trial failed.
    pub report: Option<MetricsReport>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub best_index: usize,
    pub best: ExperimentConfig,
    pub report: MetricsReport,
    pub trials: Vec<TrialRecord>,
}

/// Random search: `budget` i.i.d. draws, each evaluated on every split; the
/// winner has the highest mean validation accuracy (earliest on ties).
/// Trials whose loss diverges are recorded and skipped.
pub fn random_search(
    bundle: &DatasetBundle,
    space: &SearchSpace,
    base: &ExperimentConfig,
    budget: usize,
    splits: &[SplitSpec],
    seed: u64,
    cache: &PropagationCache,
) -> Result<SearchOutcome> {
    if budget == 0 {
        return Err(Error::input("search budget must be at least 1"));
    }
    space.validate()?;
    let mut trials = Vec::with_capacity(budget);
    let mut best: Option<(usize, f64)> = None;
    for (index, config) in space.samples(base, budget, seed).into_iter().enumerate() {
        match run_experiment(bundle, &config, splits, cache) {
            Ok(report) => {
                if best.is_none_or(|(_, v)| report.val_mean > v) {
                    best = Some((index, report.val_mean));
                }
                trials.push(TrialRecord {
                    index,
                    config,
                    report: Some(report),
                    error: None,
                });
            }
            Err(e @ Error::NonFiniteLoss { .. }) => {
                warn!("trial {index} failed: {e}");
                trials.push(TrialRecord {
                    index,
                    config,
                    report: None,
                    error: Some(e.to_string()),
                });
            }
            Err(e) => return Err(e),
        }
    }
    let (best_index, _) = best.ok_or_else(|| Error::input("every search trial diverged"))?;
    let report = trials[best_index].report.clone().expect("successful trial");
    Ok(SearchOutcome {
        best_index,
        best: trials[best_index].config,
        report,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{make_splits, DEFAULT_RATIOS};
    use crate::synthetic::{generate_fsbm, FsbmConfig, FsbmMode};

    #[test]
    fn samples_stay_in_the_space_and_repeat() {
        let space = SearchSpace::default();
        let base = ExperimentConfig::default();
        let a = space.samples(&base, 300, 5);
        assert_eq!(a, space.samples(&base, 300, 5));
        assert_eq!(&a[..10], &space.samples(&base, 10, 5)[..]);
        for c in &a {
            assert!((1e-3..=1e-1).contains(&c.lr));
            assert!((1e-6..=1e-1).contains(&c.weight_decay));
            assert!(space.dropout.contains(&c.dropout));
            assert!(space.beta.contains(&c.beta) && space.gamma.contains(&c.gamma));
            assert_eq!((c.layers, c.hidden), (base.layers, base.hidden));
        }
        let lr_logs: Vec<f64> = a.iter().map(|c| c.lr.log10()).collect();
        let mean = lr_logs.iter().sum::<f64>() / 300.0;
        assert!((mean + 2.0).abs() < 0.15, "{mean}");
        assert!(a.iter().any(|c| c.sim_kind == SimilarityKind::Euclidean));
        assert!(a.iter().any(|c| c.sim_kind == SimilarityKind::Cosine));
    }

    #[test]
    fn search_picks_the_best_prefix_trial() {
        let fsbm = FsbmConfig::mixture(80, &[0.8, 0.2], 4.0, FsbmMode::Bernoulli).unwrap();
        let bundle = DatasetBundle::from_synthetic(generate_fsbm(&fsbm, 2).unwrap(), None).unwrap();
        let splits = make_splits(bundle.n(), DEFAULT_RATIOS, 0, 2).unwrap();
        let base = ExperimentConfig {
            layers: 2,
            hidden: 8,
            epochs: 15,
            patience: 5,
            ..Default::default()
        };
        let cache = PropagationCache::new();
        let space = SearchSpace::default();
        let one = random_search(&bundle, &space, &base, 1, &splits, 9, &cache).unwrap();
        assert_eq!(one.best, space.samples(&base, 1, 9)[0]);
        let four = random_search(&bundle, &space, &base, 4, &splits, 9, &cache).unwrap();
        assert_eq!(four.trials[0].config, one.best);
        assert!(four.report.val_mean >= one.report.val_mean);
        let vals: Vec<f64> = four.trials.iter().filter_map(|t| t.report.as_ref().map(|r| r.val_mean)).collect();
        assert_eq!(four.report.val_mean, vals.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        assert!(random_search(&bundle, &space, &base, 0, &splits, 9, &cache).is_err());
    }
}
