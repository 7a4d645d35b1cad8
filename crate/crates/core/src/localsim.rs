//! Feature similarity on edges and its neighborhood average.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dense::{dot, FeatureMatrix};
use crate::error::{Error, Result};
use crate::graph::SparseGraph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    Cosine,
    Euclidean,
    /// `-(x - y)^2` on scalar features.
    NegSqScalar,
}

impl SimilarityKind {
    pub fn tag(self) -> u8 {
        match self {
            SimilarityKind::Cosine => 0,
            SimilarityKind::Euclidean => 1,
            SimilarityKind::NegSqScalar => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => SimilarityKind::Cosine,
            1 => SimilarityKind::Euclidean,
            2 => SimilarityKind::NegSqScalar,
            t => return Err(Error::format(format!("unknown similarity tag {t}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            SimilarityKind::Cosine => "cosine",
            SimilarityKind::Euclidean => "euclidean",
            SimilarityKind::NegSqScalar => "neg_sq_scalar",
        }
    }
}

impl fmt::Display for SimilarityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SimilarityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "cosine" => SimilarityKind::Cosine,
            "euclidean" => SimilarityKind::Euclidean,
            "neg_sq_scalar" => SimilarityKind::NegSqScalar,
            other => return Err(Error::input(format!("unknown similarity measure `{other}`"))),
        })
    }
}

/// Similarity of two feature vectors. Cosine against a zero vector is 0.
pub fn similarity(x: &[f64], y: &[f64], kind: SimilarityKind) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::input(format!(
            "similarity of vectors with lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(match kind {
        SimilarityKind::Cosine => {
            let nx = dot(x, x).sqrt();
            let ny = dot(y, y).sqrt();
            if nx == 0.0 || ny == 0.0 {
                0.0
            } else {
                (dot(x, y) / (nx * ny)).clamp(-1.0, 1.0)
            }
        }
        SimilarityKind::Euclidean => {
            -x.iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        }
        SimilarityKind::NegSqScalar => {
            if x.len() != 1 {
                return Err(Error::input(format!(
                    "neg_sq_scalar needs 1-dimensional features, got {}",
                    x.len()
                )));
            }
            let diff = x[0] - y[0];
            -diff * diff
        }
    })
}

/// `(d_ij, d_ij^2)` for every directed CSR entry, in CSR order.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSimFeatures {
    pub d: Vec<f64>,
    pub d_sq: Vec<f64>,
}

impl EdgeSimFeatures {
    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }
}

pub fn edge_sim_features(g: &SparseGraph, x: &FeatureMatrix, kind: SimilarityKind) -> Result<EdgeSimFeatures> {
    if x.rows() != g.n() {
        return Err(Error::input(format!(
            "feature matrix has {} rows, graph has {} nodes",
            x.rows(),
            g.n()
        )));
    }
    let mut d = Vec::with_capacity(g.directed_entry_count());
    for i in 0..g.n() {
        for &j in g.neighbors(i) {
            // compute on the (min, max) orientation so d_ij == d_ji bitwise
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            d.push(similarity(x.row(a), x.row(b), kind)?);
        }
    }
    let d_sq = d.iter().map(|v| v * v).collect();
    Ok(EdgeSimFeatures { d, d_sq })
}

/// Per-node mean of a per-directed-entry quantity; isolated nodes get 0.
pub fn neighborhood_mean(g: &SparseGraph, per_edge: &[f64]) -> Result<Vec<f64>> {
    if per_edge.len() != g.directed_entry_count() {
        return Err(Error::input(format!(
            "per-edge vector has length {}, graph has {} directed entries",
            per_edge.len(),
            g.directed_entry_count()
        )));
    }
    Ok((0..g.n())
        .map(|i| {
            let r = g.row_range(i);
            if r.is_empty() {
                0.0
            } else {
                let len = r.len() as f64;
                per_edge[r].iter().sum::<f64>() / len
            }
        })
        .collect())
}

/// Per-node LocalSim values.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalSimVector {
    pub phi: Vec<f64>,
}

/// Mean similarity of each node to its neighbors.
pub fn naive_localsim(g: &SparseGraph, x: &FeatureMatrix, kind: SimilarityKind) -> Result<LocalSimVector> {
    let feats = edge_sim_features(g, x, kind)?;
    Ok(LocalSimVector {
        phi: neighborhood_mean(g, &feats.d)?,
    })
}
