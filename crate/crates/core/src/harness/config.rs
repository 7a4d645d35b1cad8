use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::ExperimentConfig;
use super::search::DEFAULT_BUDGET;
use crate::error::{Error, Result};
use crate::localsim::SimilarityKind;
use crate::model::{LocalSimMode, WeightMode};
use crate::propagation::Variant;
use crate::synthetic::FsbmMode;

pub const REPORT_FILE: &str = "report.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const TIMING_FILE: &str = "timing.txt";

/// Flat key/value run configuration. Every key is optional; missing keys
/// take defaults. A written manifest parses back into the same value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    pub version: Option<String>,
    pub seed: Option<u64>,
    /// Dataset directory.
    pub data: Option<String>,
    /// Number of random splits.
    pub splits: Option<usize>,

    pub layers: Option<usize>,
    pub gamma: Option<f64>,
    pub beta: Option<f64>,
    pub variant: Option<Variant>,
    pub normalize: Option<bool>,
    pub hidden: Option<usize>,
    pub h_ls: Option<usize>,
    pub h_alpha: Option<usize>,
    pub sim_kind: Option<SimilarityKind>,
    pub dropout: Option<f64>,
    pub weight_mode: Option<WeightMode>,
    pub localsim_mode: Option<LocalSimMode>,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub epochs: Option<usize>,
    pub patience: Option<usize>,

    /// Random-search trials.
    pub budget: Option<usize>,
    /// Depths visited by the depth sweep.
    pub depths: Option<Vec<usize>>,

    /// FSBM node count.
    pub n: Option<usize>,
    /// Homophily level of each FSBM subgraph.
    pub lambdas: Option<Vec<f64>>,
    pub expected_degree: Option<f64>,
    pub mu: Option<Vec<f64>>,
    pub sigma: Option<f64>,
    pub fsbm_mode: Option<FsbmMode>,
    /// Monte-Carlo trials for the theory check.
    pub trials: Option<usize>,
    /// `(lambda_1, lambda_2)` cells of the toy study.
    pub grid: Option<Vec<[f64; 2]>>,
    /// Seeds per toy-study cell.
    pub toy_seeds: Option<usize>,
    /// Directory holding `split_{i}.lspm` checkpoints.
    pub checkpoints: Option<String>,
}

fn to_table(cfg: &RunConfig) -> Result<toml::Table> {
    toml::Table::try_from(cfg).map_err(|e| Error::Config(e.to_string()))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Keys set in `over` replace those of `self`.
    pub fn overlay(&self, over: &RunConfig) -> Result<RunConfig> {
        let mut table = to_table(self)?;
        table.extend(to_table(over)?);
        table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    /// Default value of every key that has one.
    pub fn defaults() -> Self {
        let e = ExperimentConfig::default();
        Self {
            command: None,
            version: Some(crate::VERSION.to_string()),
            seed: Some(0),
            data: None,
            splits: Some(10),
            layers: Some(e.layers),
            gamma: Some(e.gamma),
            beta: Some(e.beta),
            variant: Some(e.variant),
            normalize: Some(e.normalize),
            hidden: Some(e.hidden),
            h_ls: Some(e.h_ls),
            h_alpha: Some(e.h_alpha),
            sim_kind: Some(e.sim_kind),
            dropout: Some(e.dropout),
            weight_mode: Some(e.weight_mode),
            localsim_mode: Some(e.localsim_mode),
            lr: Some(e.lr),
            weight_decay: Some(e.weight_decay),
            epochs: Some(e.epochs),
            patience: Some(e.patience),
            budget: Some(DEFAULT_BUDGET),
            depths: Some(vec![1, 2, 4, 8]),
            n: Some(1000),
            lambdas: Some(vec![0.9, 0.1]),
            expected_degree: Some(10.0),
            mu: Some(vec![1.0, -1.0]),
            sigma: Some(1.0),
            fsbm_mode: Some(FsbmMode::Bernoulli),
            trials: Some(100),
            grid: Some(vec![[0.9, 0.1], [0.5, 0.5], [1.0, 1.0]]),
            toy_seeds: Some(5),
            checkpoints: None,
        }
    }

    /// Defaults for one subcommand. The theory check assumes
    /// expectation-exact graphs; everything else samples edges.
    pub fn defaults_for(command: Option<&str>) -> Self {
        let mut d = Self::defaults();
        if command == Some("theory") {
            d.fsbm_mode = Some(FsbmMode::ExpectationExact);
        }
        d
    }

    /// Defaults for `self.command` overlaid with `self`.
    pub fn resolved(&self) -> Result<RunConfig> {
        Self::defaults_for(self.command.as_deref()).overlay(self)
    }

    /// Experiment settings, with defaults for missing keys.
    pub fn experiment(&self) -> ExperimentConfig {
        let d = ExperimentConfig::default();
        ExperimentConfig {
            layers: self.layers.unwrap_or(d.layers),
            gamma: self.gamma.unwrap_or(d.gamma),
            beta: self.beta.unwrap_or(d.beta),
            variant: self.variant.unwrap_or(d.variant),
            normalize: self.normalize.unwrap_or(d.normalize),
            hidden: self.hidden.unwrap_or(d.hidden),
            h_ls: self.h_ls.unwrap_or(d.h_ls),
            h_alpha: self.h_alpha.unwrap_or(d.h_alpha),
            sim_kind: self.sim_kind.unwrap_or(d.sim_kind),
            dropout: self.dropout.unwrap_or(d.dropout),
            weight_mode: self.weight_mode.unwrap_or(d.weight_mode),
            localsim_mode: self.localsim_mode.unwrap_or(d.localsim_mode),
            lr: self.lr.unwrap_or(d.lr),
            weight_decay: self.weight_decay.unwrap_or(d.weight_decay),
            epochs: self.epochs.unwrap_or(d.epochs),
            patience: self.patience.unwrap_or(d.patience),
        }
    }

    /// Manifest text: comment header, then the flat key/value document.
    pub fn to_manifest(&self) -> Result<String> {
        let body = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        let command = self.command.as_deref().unwrap_or("<command>");
        Ok(format!(
            "# lsgnn run manifest\n# replay with: lsgnn --config {MANIFEST_FILE} {command}\n\n{body}"
        ))
    }
}

/// Writes a header and rows as CSV.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| Error::Config(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips() {
        let mut cfg = RunConfig::defaults();
        cfg.command = Some("train".into());
        cfg.data = Some("data/texas".into());
        cfg.lr = Some(0.1 + 0.2);
        cfg.weight_decay = Some(3.7e-6);
        let text = cfg.to_manifest().unwrap();
        assert!(text.starts_with("# lsgnn run manifest"));
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse("lr = 0.01\nlearning_rate = 0.1\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("learning_rate"));
    }

    #[test]
    fn overlay_prefers_the_upper_layer() {
        let file = RunConfig::parse("lr = 0.05\nlayers = 3\nsim_kind = \"euclidean\"\n").unwrap();
        let cli = RunConfig {
            layers: Some(7),
            ..Default::default()
        };
        let merged = file.overlay(&cli).unwrap().resolved().unwrap();
        let e = merged.experiment();
        assert_eq!((e.layers, e.lr, e.sim_kind), (7, 0.05, SimilarityKind::Euclidean));
        assert_eq!(merged.splits, Some(10));
        assert_eq!(merged.depths, Some(vec![1, 2, 4, 8]));
        assert_eq!(merged.fsbm_mode, Some(FsbmMode::Bernoulli));
        let theory = RunConfig {
            command: Some("theory".into()),
            ..Default::default()
        };
        assert_eq!(theory.resolved().unwrap().fsbm_mode, Some(FsbmMode::ExpectationExact));
    }

    #[test]
    fn enum_values_use_snake_case() {
        let c = RunConfig::parse(
            "variant = \"difference_residual\"\nweight_mode = \"graph_level\"\nfsbm_mode = \"expectation_exact\"\n",
        )
        .unwrap();
        assert_eq!(c.variant, Some(Variant::DifferenceResidual));
        assert_eq!(c.weight_mode, Some(WeightMode::GraphLevel));
        assert_eq!(c.fsbm_mode, Some(FsbmMode::ExpectationExact));
        assert!(RunConfig::parse("variant = \"gcn\"\n").is_err());
    }
}
