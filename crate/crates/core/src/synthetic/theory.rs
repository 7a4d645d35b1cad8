//! Monte-Carlo checks of the closed-form LocalSim expectation on FSBM
//! graphs.

use rayon::prelude::*;

use super::{generate_fsbm, FsbmConfig};
use crate::error::{Error, Result};
use crate::localsim::{naive_localsim, SimilarityKind};

/// Mean and standard error of the mean.
fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubgraphTheory {
    pub subgraph: usize,
    pub lambda: f64,
    /// Mean over trials of the subgraph-average LocalSim.
    pub empirical: f64,
    /// `-2 sigma^2 - (1 - lambda) (mu_1 - mu_2)^2`
    pub analytic: f64,
    pub stderr: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TheoryReport {
    pub subgraphs: Vec<SubgraphTheory>,
    pub trials: usize,
}

impl TheoryReport {
    pub fn pass(&self) -> bool {
        self.subgraphs.iter().all(|s| s.pass)
    }
}

/// `-2 sigma^2 - (1 - lambda)(mu_1 - mu_2)^2`.
pub fn analytic_localsim(lambda: f64, sigma: f64, mu: (f64, f64)) -> f64 {
    -2.0 * sigma * sigma - (1.0 - lambda) * (mu.0 - mu.1).powi(2)
}

fn two_communities(cfg: &FsbmConfig) -> Result<(f64, f64)> {
    cfg.validate()?;
    if cfg.communities != 2 {
        return Err(Error::input("the LocalSim expectation is stated for two communities"));
    }
    Ok((cfg.mu[0], cfg.mu[1]))
}

/// Per-trial naive LocalSim (negative squared difference) of every node.
fn localsim_trials(cfg: &FsbmConfig, trials: usize, seed: u64) -> Result<Vec<(Vec<f64>, Vec<usize>, Vec<bool>)>> {
    if trials == 0 {
        return Err(Error::input("need at least one trial"));
    }
    (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let ds = generate_fsbm(cfg, seed.wrapping_add(t))?;
            let phi = naive_localsim(&ds.graph, &ds.x, SimilarityKind::NegSqScalar)?.phi;
            let has_neighbors = (0..cfg.n).map(|i| ds.graph.degree(i) > 0).collect();
            Ok((phi, ds.subgraph_id, has_neighbors))
        })
        .collect()
}

/// Compares the empirical subgraph mean of LocalSim with its closed form.
/// A subgraph passes when the gap is within `max(3 stderr, 2% |analytic|)`.
/// Trial `i` uses seed `seed + i`; isolated nodes are left out.
pub fn theory_check(cfg: &FsbmConfig, trials: usize, seed: u64) -> Result<TheoryReport> {
    let mu = two_communities(cfg)?;
    let runs = localsim_trials(cfg, trials, seed)?;
    let lambdas = cfg.lambdas();
    let subgraphs = (0..cfg.subgraphs)
        .map(|tau| {
            let per_trial: Vec<f64> = runs
                .iter()
                .map(|(phi, sub, alive)| {
                    let vals: Vec<f64> = (0..phi.len()).filter(|&i| sub[i] == tau && alive[i]).map(|i| phi[i]).collect();
                    vals.iter().sum::<f64>() / vals.len().max(1) as f64
                })
                .collect();
            let (empirical, stderr) = mean_stderr(&per_trial);
            let analytic = analytic_localsim(lambdas[tau], cfg.sigma, mu);
            let pass = (empirical - analytic).abs() <= (3.0 * stderr).max(0.02 * analytic.abs());
            SubgraphTheory {
                subgraph: tau,
                lambda: lambdas[tau],
                empirical,
                analytic,
                stderr,
                pass,
            }
        })
        .collect();
    Ok(TheoryReport { subgraphs, trials })
}

#[derive(Clone, Debug, PartialEq)]
pub struct L1GapReport {
    /// `|lambda_1 - lambda_2| (mu_1 - mu_2)^2`
    pub bound: f64,
    /// Mean over trials of the average `|phi_i - phi_j|` across subgraphs.
    pub empirical: f64,
    pub stderr: f64,
    pub trials: usize,
    pub pass: bool,
}

/// Mean of `|a_i - b_j|` over all pairs, via sorting and prefix sums.
fn mean_abs_pair_diff(a: &[f64], b: &[f64]) -> f64 {
    let mut sorted = b.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut prefix = Vec::with_capacity(sorted.len() + 1);
    prefix.push(0.0);
    for v in &sorted {
        prefix.push(prefix.last().unwrap() + v);
    }
    let total = *prefix.last().unwrap();
    let m = sorted.len() as f64;
    let sum: f64 = a
        .iter()
        .map(|&x| {
            let below = sorted.partition_point(|&v| v < x);
            let lo = prefix[below];
            x * below as f64 - lo + (total - lo) - x * (m - below as f64)
        })
        .sum();
    sum / (a.len() as f64 * m)
}

/// Checks the expected cross-subgraph LocalSim gap against its lower bound:
/// passes when the empirical mean is at least `bound - 3 stderr`.
pub fn l1_gap_check(cfg: &FsbmConfig, trials: usize, seed: u64) -> Result<L1GapReport> {
    let mu = two_communities(cfg)?;
    if cfg.subgraphs != 2 {
        return Err(Error::input("the LocalSim gap bound compares exactly two subgraphs"));
    }
    let lambdas = cfg.lambdas();
    let bound = (lambdas[0] - lambdas[1]).abs() * (mu.0 - mu.1).powi(2);
    let runs = localsim_trials(cfg, trials, seed)?;
    let per_trial: Vec<f64> = runs
        .iter()
        .map(|(phi, sub, alive)| {
            let pick = |tau| (0..phi.len()).filter(|&i| sub[i] == tau && alive[i]).map(|i| phi[i]).collect::<Vec<_>>();
            mean_abs_pair_diff(&pick(0), &pick(1))
        })
        .collect();
    let (empirical, stderr) = mean_stderr(&per_trial);
    Ok(L1GapReport {
        bound,
        empirical,
        stderr,
        trials,
        pass: empirical >= bound - 3.0 * stderr,
    })
}
