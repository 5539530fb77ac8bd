use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audit::{Grouping, LonelyPsu, ShapOutput};
use crate::dataset::SyntheticConfig;
use crate::error::{Error, Result};
use crate::nas::SearchConfig;
use crate::neural::TrainConfig;
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineOptions {
    pub logistic: bool,
    pub gbdt: bool,
    pub logistic_tuning: SearchConfig,
    pub gbdt_tuning: SearchConfig,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        Self {
            logistic: true,
            gbdt: true,
            logistic_tuning: SearchConfig::baseline_tuning(0),
            gbdt_tuning: SearchConfig::baseline_tuning(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditOptions {
    pub groupings: Vec<Grouping>,
    pub bootstrap_replicates: usize,
    pub lonely_psu: LonelyPsu,
    pub permutation_repeats: usize,
    pub shap_budget: usize,
    pub shap_instances: usize,
    pub shap_background: usize,
    pub shap_output: ShapOutput,
    /// Share of the test set flagged by the screening-sensitivity metric.
    pub screening_fraction: f64,
    pub reliability_bins: usize,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            groupings: vec![Grouping::Division, Grouping::Residence],
            bootstrap_replicates: 1000,
            lonely_psu: LonelyPsu::Error,
            permutation_repeats: 10,
            shap_budget: 2048,
            shap_instances: 100,
            shap_background: 100,
            shap_output: ShapOutput::Probability,
            screening_fraction: 0.1,
            reliability_bins: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Md,
}

/// Everything a pipeline run needs. Loaded from a single JSON document in
/// which every field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Global seed; every stage seed is derived from it (see [`PipelineConfig::resolved`]).
    pub seed: u64,
    /// Input CSV. When absent the synthetic generator provides the data.
    pub data: Option<PathBuf>,
    pub workspace: PathBuf,
    pub synthetic: SyntheticConfig,
    pub strict: bool,
    pub complete_case: bool,
    /// Reuse `models/nas.json` instead of searching.
    pub skip_nas: bool,
    pub search: SearchConfig,
    pub train: TrainConfig,
    pub baselines: BaselineOptions,
    pub audit: AuditOptions,
    pub formats: Vec<ReportFormat>,
    pub threads: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            data: None,
            workspace: PathBuf::from("workspace"),
            synthetic: SyntheticConfig::default(),
            strict: false,
            complete_case: false,
            skip_nas: false,
            search: SearchConfig::default(),
            train: TrainConfig::default(),
            baselines: BaselineOptions::default(),
            audit: AuditOptions::default(),
            formats: vec![ReportFormat::Md, ReportFormat::Csv, ReportFormat::Json],
            threads: None,
        }
    }
}

/// Stage seeds derived from the global seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub generator: u64,
    pub search: u64,
    pub final_train: u64,
    pub logistic_tuning: u64,
    pub gbdt_tuning: u64,
    pub gbdt_fit: u64,
    pub bootstrap: u64,
    pub permutation: u64,
    pub shap: u64,
    pub ties: u64,
}

impl StageSeeds {
    pub fn from_global(seed: u64) -> Self {
        Self {
            generator: derive_seed(seed, &[stream::GENERATOR]),
            search: derive_seed(seed, &[stream::NAS]),
            final_train: derive_seed(seed, &[stream::FINAL_TRAIN]),
            logistic_tuning: derive_seed(seed, &[stream::LOGREG_TUNE]),
            gbdt_tuning: derive_seed(seed, &[stream::GBDT_TUNE]),
            gbdt_fit: derive_seed(seed, &[stream::GBDT_TUNE, 1]),
            bootstrap: derive_seed(seed, &[stream::BOOTSTRAP]),
            permutation: derive_seed(seed, &[stream::PERMUTATION]),
            shap: derive_seed(seed, &[stream::SHAP]),
            ties: derive_seed(seed, &[stream::TIES]),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config JSON: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn seeds(&self) -> StageSeeds {
        StageSeeds::from_global(self.seed)
    }

    /// Copy with every stage seed overwritten from the global seed, so a
    /// single `seed` controls the whole run.
    pub fn resolved(&self) -> Self {
        let s = self.seeds();
        let mut c = self.clone();
        c.synthetic.seed = s.generator;
        c.search.seed = s.search;
        c.train.seed = s.final_train;
        c.baselines.logistic_tuning.seed = s.logistic_tuning;
        c.baselines.gbdt_tuning.seed = s.gbdt_tuning;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.synthetic.validate()?;
        self.search.validate()?;
        self.train.validate()?;
        if self.baselines.logistic {
            self.baselines.logistic_tuning.validate()?;
        }
        if self.baselines.gbdt {
            self.baselines.gbdt_tuning.validate()?;
        }
        let a = &self.audit;
        if a.bootstrap_replicates == 0 || a.permutation_repeats == 0 || a.shap_instances == 0 || a.shap_background == 0 {
            return Err(Error::Config("audit counts (replicates, repeats, SHAP sizes) must be positive".into()));
        }
        if !(a.screening_fraction > 0.0 && a.screening_fraction <= 1.0) {
            return Err(Error::Config(format!("screening_fraction {} outside (0, 1]", a.screening_fraction)));
        }
        if a.reliability_bins < 2 {
            return Err(Error::Config("reliability_bins must be >= 2".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        if let Some(p) = &self.data {
            if !p.exists() {
                return Err(Error::Config(format!("data file {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}
