//! Pipeline configuration: a TOML file with fixed sections. Unknown keys are
//! rejected; omitted keys take the defaults below.
//!
//! ```toml
//! [data]
//! ratings = "ml-latest-small/ratings.csv"   # relative to the config file
//! movies = "ml-latest-small/movies.csv"
//! rating_min = 0.5
//! rating_max = 5.0
//!
//! [train]
//! embedding_dim = 40
//! iterations = 20
//! regularization = 0.05
//! init_scale = 0.1
//! seed = 0
//!
//! [history]
//! size = 9
//! popularity_quantile = 0.9
//! imputed_rating = 4.0
//! seed = 1
//!
//! [explain]
//! size = 3
//!
//! [counterfactual]
//! finetune_iterations = 5
//! approx_strategy = "warm-start-finetune"   # or "full-retrain"
//!
//! [analysis]
//! train_fraction = 0.7
//! split_seed = 2
//!
//! [runtime]
//! workers = 0          # 0 = available parallelism
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use cfprox_core::counterfactual::Strategy;
use cfprox_core::dataset::RatingScale;
use cfprox_core::mf::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: DataSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub history: HistorySection,
    #[serde(default)]
    pub explain: ExplainSection,
    #[serde(default)]
    pub counterfactual: CounterfactualSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub runtime: RuntimeSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub ratings: PathBuf,
    pub movies: PathBuf,
    #[serde(default = "default_rating_min")]
    pub rating_min: f64,
    #[serde(default = "default_rating_max")]
    pub rating_max: f64,
}

fn default_rating_min() -> f64 {
    0.5
}

fn default_rating_max() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub embedding_dim: usize,
    pub iterations: usize,
    pub regularization: f64,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let c = TrainConfig::default();
        TrainSection {
            embedding_dim: c.embedding_dim,
            iterations: c.iterations,
            regularization: c.regularization,
            init_scale: c.init_scale,
            seed: c.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistorySection {
    pub size: usize,
    pub popularity_quantile: f64,
    pub imputed_rating: f64,
    pub seed: u64,
}

impl Default for HistorySection {
    fn default() -> Self {
        HistorySection {
            size: 9,
            popularity_quantile: 0.9,
            imputed_rating: 4.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSection {
    pub size: usize,
}

impl Default for ExplainSection {
    fn default() -> Self {
        ExplainSection { size: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterfactualSection {
    pub finetune_iterations: usize,
    /// How the CF^A column is produced.
    pub approx_strategy: Strategy,
}

impl Default for CounterfactualSection {
    fn default() -> Self {
        CounterfactualSection {
            finetune_iterations: 5,
            approx_strategy: Strategy::WarmStartFinetune,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub train_fraction: f64,
    pub split_seed: u64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            train_fraction: 0.7,
            split_seed: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeSection {
    /// Worker threads for scoring; 0 uses the available parallelism.
    pub workers: usize,
}

impl PipelineConfig {
    /// Default configuration for the given data files.
    pub fn with_data(ratings: impl Into<PathBuf>, movies: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            data: DataSection {
                ratings: ratings.into(),
                movies: movies.into(),
                rating_min: default_rating_min(),
                rating_max: default_rating_max(),
            },
            train: TrainSection::default(),
            history: HistorySection::default(),
            explain: ExplainSection::default(),
            counterfactual: CounterfactualSection::default(),
            analysis: AnalysisSection::default(),
            runtime: RuntimeSection::default(),
        }
    }

    /// Reads, parses and validates a config file; relative data paths are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg =
            Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data.ratings, &mut cfg.data.movies] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        self.train_config().validate().map_err(|e| e.to_string())?;
        let scale = self.rating_scale();
        if !(scale.min < scale.max) {
            return Err("data.rating_min must be below data.rating_max".into());
        }
        if !(0.0..=1.0).contains(&self.history.popularity_quantile) {
            return Err("history.popularity_quantile must lie in [0, 1]".into());
        }
        if !scale.contains(self.history.imputed_rating) {
            return Err("history.imputed_rating must lie on the rating scale".into());
        }
        if self.explain.size == 0 || self.explain.size > self.history.size {
            return Err("explain.size must lie in 1..=history.size".into());
        }
        if self.counterfactual.finetune_iterations == 0 {
            return Err("counterfactual.finetune_iterations must be at least 1".into());
        }
        if !(self.analysis.train_fraction > 0.0 && self.analysis.train_fraction < 1.0) {
            return Err("analysis.train_fraction must lie strictly between 0 and 1".into());
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            embedding_dim: self.train.embedding_dim,
            iterations: self.train.iterations,
            regularization: self.train.regularization,
            init_scale: self.train.init_scale,
            seed: self.train.seed,
        }
    }

    pub fn rating_scale(&self) -> RatingScale {
        RatingScale {
            min: self.data.rating_min,
            max: self.data.rating_max,
        }
    }

    pub fn workers(&self) -> usize {
        match self.runtime.workers {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
            n => n,
        }
    }

    /// Identifies a run: every knob that affects results plus the SHA-256 of
    /// both data files. Paths and worker count are excluded.
    pub fn run_hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        for p in [&self.data.ratings, &self.data.movies] {
            let bytes = fs::read(p).map_err(|e| CliError::io(p, e))?;
            h.update(Sha256::digest(&bytes));
        }
        let mut echo = self.clone();
        echo.data.ratings = PathBuf::new();
        echo.data.movies = PathBuf::new();
        echo.runtime = RuntimeSection::default();
        h.update(serde_json::to_vec(&echo).expect("config serializes"));
        Ok(hex::encode(&h.finalize()[..8]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_takes_protocol_defaults() {
        let cfg =
            PipelineConfig::parse("[data]\nratings = \"r.csv\"\nmovies = \"m.csv\"\n").unwrap();
        assert_eq!(cfg.train.embedding_dim, 40);
        assert_eq!(cfg.train.iterations, 20);
        assert_eq!(cfg.history.size, 9);
        assert_eq!(cfg.history.popularity_quantile, 0.9);
        assert_eq!(cfg.explain.size, 3);
        assert_eq!(cfg.counterfactual.finetune_iterations, 5);
        assert_eq!(
            cfg.counterfactual.approx_strategy,
            Strategy::WarmStartFinetune
        );
        assert_eq!(cfg.analysis.train_fraction, 0.7);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_errors() {
        let base = "[data]\nratings = \"r.csv\"\nmovies = \"m.csv\"\n";
        assert!(
            PipelineConfig::parse(&format!("{base}[train]\nembeding_dim = 4\n"))
                .unwrap_err()
                .contains("embeding_dim")
        );
        assert!(PipelineConfig::parse(&format!("{base}[extra]\n")).is_err());
        assert!(PipelineConfig::parse(&format!("{base}[train]\niterations = 0\n")).is_err());
        assert!(PipelineConfig::parse(&format!("{base}[explain]\nsize = 10\n")).is_err());
        assert!(PipelineConfig::parse(&format!(
            "{base}[counterfactual]\napprox_strategy = \"sgd\"\n"
        ))
        .is_err());
        assert!(PipelineConfig::parse("[train]\nseed = 1\n").is_err());
    }

    #[test]
    fn strategy_key_accepts_both_values() {
        let cfg = PipelineConfig::parse(
            "[data]\nratings = \"r\"\nmovies = \"m\"\n[counterfactual]\napprox_strategy = \"full-retrain\"\n",
        )
        .unwrap();
        assert_eq!(cfg.counterfactual.approx_strategy, Strategy::FullRetrain);
    }
}
