//! Parameter-free feature propagation.
//!
//! Everything in this module runs once before training: the filter pair is
//! built from the graph, each channel is propagated `K` times and the
//! per-layer outputs are stored in a [`PropagationStack`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dense::{FeatureMatrix, Matrix};
use crate::error::{Error, Result};
use crate::graph::{enhanced_filters, FilterPair, SparseGraph, SparseMatrix};

/// Layer recurrence used to build the stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `H(1) = S X`, `H(k) = S((1 - gamma) X - gamma * sum_{l<k} H(l))`.
    Irdc,
    /// `Z(k) = S Z(k-1)`.
    Sgc,
    /// `Z(k) = Z(0) + S Z(k-1)`.
    InitialResidual,
    /// `Z(k) = S (Z(k-2) - Z(k-1))`.
    DifferenceResidual,
}

impl Variant {
    pub fn tag(self) -> u8 {
        match self {
            Variant::Irdc => 0,
            Variant::Sgc => 1,
            Variant::InitialResidual => 2,
            Variant::DifferenceResidual => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => Variant::Irdc,
            1 => Variant::Sgc,
            2 => Variant::InitialResidual,
            3 => Variant::DifferenceResidual,
            t => return Err(Error::format(format!("unknown propagation variant tag {t}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Irdc => "irdc",
            Variant::Sgc => "sgc",
            Variant::InitialResidual => "initial_residual",
            Variant::DifferenceResidual => "difference_residual",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "irdc" => Variant::Irdc,
            "sgc" => Variant::Sgc,
            "initial_residual" => Variant::InitialResidual,
            "difference_residual" => Variant::DifferenceResidual,
            other => return Err(Error::input(format!("unknown propagation variant `{other}`"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    pub layers: usize,
    pub gamma: f64,
    pub beta: f64,
    pub variant: Variant,
    pub normalize: bool,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            layers: 5,
            gamma: 0.5,
            beta: 0.5,
            variant: Variant::Irdc,
            normalize: true,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::input("propagation needs at least one layer"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::input(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::input(format!("beta must lie in [0, 1], got {}", self.beta)));
        }
        Ok(())
    }
}

/// Precomputed low- and high-pass layer outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct PropagationStack {
    pub config: PropagationConfig,
    pub low_layers: Vec<FeatureMatrix>,
    pub high_layers: Vec<FeatureMatrix>,
    pub feature_digest: [u8; 32],
}

impl PropagationStack {
    pub fn layers(&self) -> usize {
        self.low_layers.len()
    }

    pub fn n(&self) -> usize {
        self.low_layers.first().map_or(0, Matrix::rows)
    }

    pub fn d(&self) -> usize {
        self.low_layers.first().map_or(0, Matrix::cols)
    }

    /// Row-permuted copy (`new row i = old row order[i]`) for every layer.
    pub fn permute_rows(&self, order: &[usize]) -> PropagationStack {
        PropagationStack {
            config: self.config,
            low_layers: self.low_layers.iter().map(|m| m.select_rows(order)).collect(),
            high_layers: self.high_layers.iter().map(|m| m.select_rows(order)).collect(),
            feature_digest: self.feature_digest,
        }
    }
}

/// SHA-256 of a feature matrix: its shape then its values as little-endian
/// `f64`s.
pub fn feature_digest(x: &FeatureMatrix) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((x.rows() as u64).to_le_bytes());
    h.update((x.cols() as u64).to_le_bytes());
    for v in x.as_slice() {
        h.update(v.to_le_bytes());
    }
    h.finalize().into()
}

pub fn hex_digest(d: &[u8; 32]) -> String {
    d.iter().map(|b| format!("{b:02x}")).collect()
}

/// Initial residual difference connection. The running sum always uses the
/// raw layer outputs.
pub fn irdc(s: &SparseMatrix, x: &FeatureMatrix, layers: usize, gamma: f64) -> Result<Vec<FeatureMatrix>> {
    if layers == 0 {
        return Err(Error::input("irdc needs at least one layer"));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::input(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    let mut out = Vec::with_capacity(layers);
    out.push(s.mul_dense(x)?);
    let mut total = out[0].clone();
    for _ in 1..layers {
        let mut input = x.scale(1.0 - gamma);
        input.axpy(-gamma, &total)?;
        let h = s.mul_dense(&input)?;
        total.axpy(1.0, &h)?;
        out.push(h);
    }
    Ok(out)
}

/// The residual-connection baselines. Returns layers `1..=K`.
pub fn residual_propagate(
    variant: Variant,
    s: &SparseMatrix,
    x: &FeatureMatrix,
    layers: usize,
) -> Result<Vec<FeatureMatrix>> {
    if layers == 0 {
        return Err(Error::input("propagation needs at least one layer"));
    }
    let mut out: Vec<FeatureMatrix> = Vec::with_capacity(layers);
    match variant {
        Variant::Sgc => {
            let mut z = x.clone();
            for _ in 0..layers {
                z = s.mul_dense(&z)?;
                out.push(z.clone());
            }
        }
        Variant::InitialResidual => {
            let mut z = x.clone();
            for _ in 0..layers {
                z = x.add(&s.mul_dense(&z)?)?;
                out.push(z.clone());
            }
        }
        Variant::DifferenceResidual => {
            let mut prev2 = x.clone();
            let mut prev1 = s.mul_dense(x)?;
            out.push(prev1.clone());
            for _ in 1..layers {
                let z = s.mul_dense(&prev2.sub(&prev1)?)?;
                prev2 = prev1;
                prev1 = z.clone();
                out.push(z);
            }
        }
        Variant::Irdc => {
            return Err(Error::input(
                "irdc is not a residual baseline; call irdc() with a gamma",
            ))
        }
    }
    Ok(out)
}

/// Scales every nonzero row to unit Euclidean norm.
pub fn row_normalize(m: &FeatureMatrix) -> FeatureMatrix {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
    }
    out
}

fn propagate_channel(s: &SparseMatrix, x: &FeatureMatrix, cfg: &PropagationConfig) -> Result<Vec<FeatureMatrix>> {
    let layers = match cfg.variant {
        Variant::Irdc => irdc(s, x, cfg.layers, cfg.gamma)?,
        v => residual_propagate(v, s, x, cfg.layers)?,
    };
    Ok(if cfg.normalize {
        layers.iter().map(row_normalize).collect()
    } else {
        layers
    })
}

/// Propagates `x` under an explicit filter pair.
pub fn precompute_with_filters(
    filters: &FilterPair,
    x: &FeatureMatrix,
    cfg: &PropagationConfig,
) -> Result<PropagationStack> {
    cfg.validate()?;
    if !x.is_finite() {
        return Err(Error::input("feature matrix contains non-finite values"));
    }
    if filters.low.n_cols() != x.rows() {
        return Err(Error::input(format!(
            "feature matrix has {} rows, filter expects {}",
            x.rows(),
            filters.low.n_cols()
        )));
    }
    Ok(PropagationStack {
        config: *cfg,
        low_layers: propagate_channel(&filters.low, x, cfg)?,
        high_layers: propagate_channel(&filters.high, x, cfg)?,
        feature_digest: feature_digest(x),
    })
}

/// Builds the enhanced filters for `cfg.beta` and propagates both channels.
pub fn precompute_bundle(g: &SparseGraph, x: &FeatureMatrix, cfg: &PropagationConfig) -> Result<PropagationStack> {
    cfg.validate()?;
    if x.rows() != g.n() {
        return Err(Error::input(format!(
            "feature matrix has {} rows, graph has {} nodes",
            x.rows(),
            g.n()
        )));
    }
    let filters = enhanced_filters(g, cfg.beta)?;
    precompute_with_filters(&filters, x, cfg)
}
