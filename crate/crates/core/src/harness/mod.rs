//! Dataset I/O, splits and experiment drivers.

mod config;
mod dataset;
mod experiment;
mod search;
mod splits;

pub use config::{write_csv, RunConfig, MANIFEST_FILE, REPORT_FILE, TIMING_FILE};
pub use dataset::{
    dataset_stats, load_dataset, parse_features, parse_labels, save_dataset, DatasetBundle, DatasetStats, EDGES_FILE,
    FEATURES_FILE, LABELS_FILE,
};
pub use experiment::{
    depth_sweep, run_experiment, train_splits, DepthRow, ExperimentConfig, MetricsReport, PropagationCache,
    SplitResult, TrainedRun,
};
pub use search::{random_search, SearchOutcome, SearchSpace, TrialRecord, DEFAULT_BUDGET};
pub use splits::{make_splits, SplitSpec, DEFAULT_RATIOS};
