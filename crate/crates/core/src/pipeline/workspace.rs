use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Fixed artifact layout under a workspace root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workspace {
    root: PathBuf,
}

pub const MODEL_NAMES: [&str; 3] = ["nas", "logistic", "gbdt"];
pub const SPLIT_NAMES: [&str; 3] = ["train", "validation", "test"];

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn create(&self) -> Result<()> {
        for d in [self.data_dir(), self.models_dir(), self.metrics_dir(), self.reports_dir()] {
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        Ok(())
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn metrics_dir(&self) -> PathBuf {
        self.root.join("metrics")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn records(&self) -> PathBuf {
        self.data_dir().join("records.csv")
    }

    pub fn split(&self, name: &str) -> PathBuf {
        self.data_dir().join(format!("{name}.csv"))
    }

    pub fn features(&self, name: &str) -> PathBuf {
        self.data_dir().join(format!("features_{name}.csv"))
    }

    pub fn data_summary(&self) -> PathBuf {
        self.metrics_dir().join("data_summary.json")
    }

    pub fn encoder(&self) -> PathBuf {
        self.models_dir().join("encoder.json")
    }

    pub fn model(&self, name: &str) -> PathBuf {
        self.models_dir().join(format!("{name}.json"))
    }

    pub fn training_inputs(&self) -> PathBuf {
        self.metrics_dir().join("training_inputs.json")
    }

    pub fn search_history(&self) -> PathBuf {
        self.metrics_dir().join("search_history.csv")
    }

    pub fn nas_training(&self) -> PathBuf {
        self.metrics_dir().join("nas_training.json")
    }

    pub fn tuning_history(&self, model: &str) -> PathBuf {
        self.metrics_dir().join(format!("{model}_tuning.csv"))
    }

    pub fn metrics_json(&self) -> PathBuf {
        self.metrics_dir().join("metrics.json")
    }

    pub fn metrics_csv(&self) -> PathBuf {
        self.metrics_dir().join("metrics.csv")
    }

    pub fn reliability(&self) -> PathBuf {
        self.metrics_dir().join("reliability.csv")
    }

    pub fn subgroup_csv(&self, grouping: &str) -> PathBuf {
        self.metrics_dir().join(format!("subgroup_{grouping}.csv"))
    }

    pub fn audit_json(&self) -> PathBuf {
        self.metrics_dir().join("audit.json")
    }

    pub fn bootstrap(&self) -> PathBuf {
        self.metrics_dir().join("bootstrap.json")
    }

    pub fn importance(&self) -> PathBuf {
        self.metrics_dir().join("importance.csv")
    }

    pub fn shap_values(&self) -> PathBuf {
        self.metrics_dir().join("shap_values.csv")
    }

    pub fn shap_ranking(&self) -> PathBuf {
        self.metrics_dir().join("shap_ranking.json")
    }

    pub fn shap_ranking_csv(&self) -> PathBuf {
        self.metrics_dir().join("shap_ranking.csv")
    }

    pub fn summary(&self, ext: &str) -> PathBuf {
        self.reports_dir().join(format!("summary.{ext}"))
    }

    pub fn comparison_csv(&self) -> PathBuf {
        self.reports_dir().join("comparison.csv")
    }

    pub fn regional_csv(&self) -> PathBuf {
        self.reports_dir().join("regional.csv")
    }

    /// Present while artifacts may be inconsistent after a failed stage.
    pub fn stale_marker(&self) -> PathBuf {
        self.root.join("STALE")
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub(crate) fn create_file(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::File::create(path).map_err(|e| Error::io(path, e))
}
