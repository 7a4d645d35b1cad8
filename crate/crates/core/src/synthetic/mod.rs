//! Featured stochastic block models with a mixture of homophily levels:
//! disjoint subgraphs, each with its own intra/inter-community edge
//! probabilities, plus scalar Gaussian features around community means.

mod pairing;
mod theory;
mod toy;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dense::FeatureMatrix;
use crate::error::{Error, Result};
use crate::graph::SparseGraph;

pub use theory::{l1_gap_check, theory_check, L1GapReport, SubgraphTheory, TheoryReport};
pub use toy::{logistic_baseline, toy_study, ToyConfig, ToyReport, ToyRow};

/// How edges are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FsbmMode {
    /// Independent coin flips per node pair.
    Bernoulli,
    /// Every node gets exactly the rounded expected number of intra- and
    /// inter-community neighbors.
    ExpectationExact,
}

impl FsbmMode {
    pub fn name(self) -> &'static str {
        match self {
            FsbmMode::Bernoulli => "bernoulli",
            FsbmMode::ExpectationExact => "expectation_exact",
        }
    }
}

impl fmt::Display for FsbmMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FsbmMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bernoulli" => Ok(FsbmMode::Bernoulli),
            "expectation_exact" => Ok(FsbmMode::ExpectationExact),
            other => Err(Error::input(format!("unknown FSBM mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FsbmConfig {
    pub n: usize,
    /// Number of communities `r`.
    pub communities: usize,
    /// Number of disjoint subgraphs `t`.
    pub subgraphs: usize,
    /// Intra-community edge probability per subgraph.
    pub p: Vec<f64>,
    /// Inter-community edge probability per subgraph.
    pub q: Vec<f64>,
    /// Feature mean per community.
    pub mu: Vec<f64>,
    pub sigma: f64,
    pub mode: FsbmMode,
}

impl FsbmConfig {
    /// Two equal communities with means `(1, -1)`, unit noise, one subgraph
    /// per entry of `lambdas`, and edge probabilities solved for the given
    /// expected degree.
    pub fn mixture(n: usize, lambdas: &[f64], expected_degree: f64, mode: FsbmMode) -> Result<Self> {
        let (p, q) = lambdas
            .iter()
            .map(|&l| solve_edge_probs(l, n, expected_degree))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        let cfg = Self {
            n,
            communities: 2,
            subgraphs: lambdas.len(),
            p,
            q,
            mu: vec![1.0, -1.0],
            sigma: 1.0,
            mode,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let (r, t) = (self.communities, self.subgraphs);
        if r == 0 || t == 0 {
            return Err(Error::input("FSBM needs at least one community and one subgraph"));
        }
        if self.n == 0 || self.n % (r * t) != 0 {
            return Err(Error::input(format!(
                "n = {} must be a positive multiple of communities x subgraphs = {}",
                self.n,
                r * t
            )));
        }
        if self.p.len() != t || self.q.len() != t {
            return Err(Error::input(format!(
                "need {t} intra and inter probabilities, got {} and {}",
                self.p.len(),
                self.q.len()
            )));
        }
        if self.mu.len() != r {
            return Err(Error::input(format!("need {r} community means, got {}", self.mu.len())));
        }
        if let Some(bad) = self.p.iter().chain(&self.q).find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::input(format!("edge probability {bad} outside [0, 1]")));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) || self.mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::input("feature means and sigma must be finite, sigma nonnegative"));
        }
        Ok(())
    }

    /// Nodes per (subgraph, community) block.
    pub fn block_size(&self) -> usize {
        self.n / (self.communities * self.subgraphs)
    }

    /// `p / (p + q)` per subgraph (1 when both are zero).
    pub fn lambdas(&self) -> Vec<f64> {
        self.p
            .iter()
            .zip(&self.q)
            .map(|(&p, &q)| if p + q > 0.0 { p / (p + q) } else { 1.0 })
            .collect()
    }

    /// Same-community and other-community partner counts of every node.
    pub fn eligible_partners(&self) -> (usize, usize) {
        let s = self.block_size();
        (s - 1, (self.communities - 1) * s)
    }

    /// Exact per-node neighbor counts used by the expectation-exact mode.
    pub fn exact_counts(&self, subgraph: usize) -> (usize, usize) {
        let (m_intra, m_inter) = self.eligible_partners();
        (
            round_half_even(m_intra as f64 * self.p[subgraph]),
            round_half_even(m_inter as f64 * self.q[subgraph]),
        )
    }
}

fn round_half_even(v: f64) -> usize {
    // guard against products like 249 * 0.02 landing a hair off an integer
    let snapped = (v * 1e9).round() / 1e9;
    snapped.round_ties_even().max(0.0) as usize
}

/// `(p, q)` with `p + q = 4 deg / n` and `p = lambda (p + q)`, the layout
/// of two equal communities in each of two equal subgraphs.
pub fn solve_edge_probs(lambda: f64, n: usize, expected_degree: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::input(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    if n == 0 || !(expected_degree.is_finite() && expected_degree >= 0.0) {
        return Err(Error::input("need n > 0 and a finite nonnegative degree"));
    }
    let total = 4.0 * expected_degree / n as f64;
    let p = lambda * total;
    let q = (1.0 - lambda) * total;
    if p > 1.0 || q > 1.0 {
        return Err(Error::input(format!(
            "expected degree {expected_degree} at n = {n} needs p = {p}, q = {q}; probabilities exceed 1"
        )));
    }
    Ok((p, q))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub graph: SparseGraph,
    /// `n x 1`
    pub x: FeatureMatrix,
    /// Community of each node, used as the class label.
    pub community: Vec<usize>,
    pub subgraph_id: Vec<usize>,
}

impl SyntheticDataset {
    pub fn nodes_in_subgraph(&self, t: usize) -> impl Iterator<Item = usize> + '_ {
        self.subgraph_id.iter().enumerate().filter(move |&(_, &s)| s == t).map(|(i, _)| i)
    }
}

/// Samples a graph and features. Nodes are laid out in contiguous subgraph
/// blocks with contiguous communities inside each block.
pub fn generate_fsbm(cfg: &FsbmConfig, seed: u64) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let (r, t, s) = (cfg.communities, cfg.subgraphs, cfg.block_size());
    let n = cfg.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let community: Vec<usize> = (0..n).map(|i| (i / s) % r).collect();
    let subgraph_id: Vec<usize> = (0..n).map(|i| i / (s * r)).collect();

    let mut edges = Vec::new();
    for tau in 0..t {
        let start = tau * r * s;
        let members: Vec<usize> = (start..start + r * s).collect();
        match cfg.mode {
            FsbmMode::Bernoulli => {
                let (p, q) = (cfg.p[tau], cfg.q[tau]);
                for (a, &u) in members.iter().enumerate() {
                    for &v in &members[a + 1..] {
                        let prob = if community[u] == community[v] { p } else { q };
                        if prob > 0.0 && rng.random::<f64>() < prob {
                            edges.push((u, v));
                        }
                    }
                }
            }
            FsbmMode::ExpectationExact => {
                let (k_intra, k_inter) = cfg.exact_counts(tau);
                for c in 0..r {
                    let block: Vec<usize> = (start + c * s..start + (c + 1) * s).collect();
                    edges.extend(pairing::regular(&block, k_intra, &|_, _| true, &mut rng)?);
                }
                if r > 1 && k_inter > 0 {
                    let across = |u: usize, v: usize| community[u] != community[v];
                    edges.extend(pairing::regular(&members, k_inter, &across, &mut rng)?);
                }
            }
        }
    }
    let graph = SparseGraph::from_edges(&edges, n)?;

    let data = community
        .iter()
        .map(|&c| cfg.mu[c] + cfg.sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let x = FeatureMatrix::from_vec(n, 1, data)?;
    Ok(SyntheticDataset {
        graph,
        x,
        community,
        subgraph_id,
    })
}
