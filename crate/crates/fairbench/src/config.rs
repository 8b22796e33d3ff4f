//! Experiment config files.
//!
//! ```toml
//! seed = 7
//! train_fraction = 0.7
//! cv_folds = 3
//! resolving = ["x0"]
//!
//! [train]
//! max_epochs = 3000
//!
//! [[pipelines]]
//! approach = "orig"
//!
//! [[pipelines]]
//! approach = "feld"
//! lambda = 0.6
//! ```

use std::path::Path;

use fairbench_core::{SplitPlan, TrainOptions};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{Approach, HarnessOptions, PipelineSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub train_fraction: f64,
    pub cv_folds: usize,
    pub timing_repeats: usize,
    pub resolving: Option<Vec<String>>,
    pub train: TrainOptions,
    /// Empty means every approach with default hyperparameters.
    pub pipelines: Vec<PipelineSpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let h = HarnessOptions::default();
        ExperimentConfig {
            seed: 0,
            train_fraction: 0.7,
            cv_folds: h.cv_folds,
            timing_repeats: h.timing_repeats,
            resolving: None,
            train: h.train,
            pipelines: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Error::Config { path: path.into(), message: e.to_string() })?;
        for p in &cfg.pipelines {
            p.approach.validate().map_err(|e| Error::Config { path: path.into(), message: format!("{}: {e}", p.id()) })?;
        }
        Ok(cfg)
    }

    /// Configured pipelines, or all approaches seeded with the experiment seed.
    pub fn specs(&self) -> Vec<PipelineSpec> {
        if self.pipelines.is_empty() {
            Approach::all().into_iter().map(|a| PipelineSpec::new(a, self.seed)).collect()
        } else {
            self.pipelines.clone()
        }
    }

    pub fn plan(&self) -> SplitPlan {
        SplitPlan::new(self.train_fraction, self.seed)
    }

    pub fn harness_options(&self) -> HarnessOptions {
        HarnessOptions {
            train: self.train.clone(),
            cv_folds: self.cv_folds,
            timing_repeats: self.timing_repeats,
            resolving: self.resolving.clone(),
            ..HarnessOptions::default()
        }
    }
}
