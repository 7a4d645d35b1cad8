//! The learned head: per-channel transforms, LocalSim-driven fusion weights,
//! the output layer, exact gradients and the training loop.

mod checkpoint;
mod forward;
mod params;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localsim::SimilarityKind;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use forward::{
    evaluate, forward, fusion_weights, loss_and_gradients, predict, refined_localsim, Forward, FusionWeights, LossAndGrads,
    ModelInput, PredictionMatrix,
};
pub use params::{Mlp, ModelParameters};
pub(crate) use train::adam_update;
pub use train::{train, Adam, EpochRecord, TrainConfig, TrainOutcome};

/// Where the fusion weights come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// Per-node weights generated from LocalSim.
    NodeLevel,
    /// One learned weight per channel and layer, shared by every node.
    GraphLevel,
}

/// How the per-node similarity statistic is formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalSimMode {
    /// Plain neighborhood mean of `d_ij`.
    Naive,
    /// Neighborhood mean of a learned perceptron of `(d_ij, d_ij^2)`.
    Refined,
}

macro_rules! name_enum {
    ($ty:ident { $($var:ident => $name:literal = $tag:literal),+ $(,)? }) => {
        impl $ty {
            pub fn name(self) -> &'static str {
                match self { $($ty::$var => $name),+ }
            }

            pub fn tag(self) -> u8 {
                match self { $($ty::$var => $tag),+ }
            }

            pub fn from_tag(tag: u8) -> Result<Self> {
                match tag {
                    $($tag => Ok($ty::$var),)+
                    t => Err(Error::format(format!(concat!("unknown ", stringify!($ty), " tag {}"), t))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$var),)+
                    other => Err(Error::input(format!(concat!("unknown ", stringify!($ty), " `{}`"), other))),
                }
            }
        }
    };
}

name_enum!(WeightMode { NodeLevel => "node_level" = 0, GraphLevel => "graph_level" = 1 });
name_enum!(LocalSimMode { Naive => "naive" = 0, Refined => "refined" = 1 });

/// Shapes and switches of the head.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of propagated layers `K`.
    pub layers: usize,
    /// Input feature dimension.
    pub in_dim: usize,
    /// Width `z` every channel is transformed to.
    pub hidden: usize,
    pub classes: usize,
    pub h_ls: usize,
    pub h_alpha: usize,
    pub sim_kind: SimilarityKind,
    pub dropout: f64,
    pub weight_mode: WeightMode,
    pub localsim_mode: LocalSimMode,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let widths = [
            ("layers", self.layers),
            ("in_dim", self.in_dim),
            ("hidden", self.hidden),
            ("classes", self.classes),
            ("h_ls", self.h_ls),
            ("h_alpha", self.h_alpha),
        ];
        for (name, v) in widths {
            if v == 0 {
                return Err(Error::input(format!("model {name} must be at least 1")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::input(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }

    /// Number of fusion weights per node, `3K`.
    pub fn alpha_width(&self) -> usize {
        3 * self.layers
    }

    /// Width of the concatenated representation, `(K + 1) z`.
    pub fn rep_width(&self) -> usize {
        (self.layers + 1) * self.hidden
    }
}
