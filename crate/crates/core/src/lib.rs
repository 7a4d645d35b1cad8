//! Heterophily-aware node classification.
//!
//! The pipeline has two halves. The parameter-free half builds enhanced
//! low/high-pass filters from the graph and precomputes multi-hop features
//! with an initial residual difference connection ([`propagation`]). The
//! learned half fuses those layers per node, with weights generated from a
//! local-similarity statistic of each node's neighborhood ([`model`]).
//!
//! [`synthetic`] generates featured stochastic block models with a mixture
//! of homophily levels and checks the closed-form expectation of the naive
//! local similarity by Monte Carlo. [`harness`] holds dataset I/O, splits
//! and the experiment drivers behind the `lsgnn` binary.

mod binio;
pub mod bundle;
pub mod dense;
pub mod error;
pub mod graph;
pub mod harness;
pub mod localsim;
pub mod model;
pub mod propagation;
pub mod synthetic;

pub use dense::{FeatureMatrix, Matrix};
pub use error::{Error, Result};
pub use graph::{FilterPair, HomophilyReport, SparseGraph, SparseMatrix};
pub use localsim::{LocalSimVector, SimilarityKind};
pub use propagation::{PropagationConfig, PropagationStack, Variant};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
