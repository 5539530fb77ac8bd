//! A common prediction interface over the three model families, and the
//! versioned JSON envelope models are saved in.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{LinearModel, TreeEnsemble};
use crate::calibration::PlattCalibrator;
use crate::error::{Error, Result};
use crate::features::feature_order_hash;
use crate::linalg::{sigmoid, Matrix};
use crate::neural::{ArchitectureSpec, Mlp};

/// Anything that maps feature rows to a log-odds score.
pub trait RiskModel: Sync {
    fn predict_logits(&self, x: &Matrix) -> Result<Vec<f64>>;

    fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self.predict_logits(x)?.into_iter().map(sigmoid).collect())
    }
}

impl RiskModel for Mlp {
    fn predict_logits(&self, x: &Matrix) -> Result<Vec<f64>> {
        Mlp::predict_logits(self, x)
    }
}

impl RiskModel for LinearModel {
    fn predict_logits(&self, x: &Matrix) -> Result<Vec<f64>> {
        LinearModel::predict_logits(self, x)
    }
}

impl RiskModel for TreeEnsemble {
    fn predict_logits(&self, x: &Matrix) -> Result<Vec<f64>> {
        TreeEnsemble::predict_logits(self, x)
    }
}

impl<F> RiskModel for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn predict_logits(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok((0..x.rows()).map(|i| self(x.row(i))).collect())
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelBody {
    Mlp {
        spec: ArchitectureSpec,
        input_dim: usize,
        params: Vec<f64>,
        running_mean: Vec<Vec<f64>>,
        running_var: Vec<Vec<f64>>,
    },
    Logistic(LinearModel),
    Gbdt(TreeEnsemble),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub feature_order_hash: String,
    pub body: ModelBody,
    pub calibrator: Option<PlattCalibrator>,
}

/// Deserialized form that can predict; the network is rebuilt once.
#[derive(Debug, Clone)]
enum Runnable {
    Mlp(Mlp),
    Logistic(LinearModel),
    Gbdt(TreeEnsemble),
}

#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub envelope: TrainedModel,
    runnable: Runnable,
}

impl TrainedModel {
    pub fn from_mlp(mlp: &Mlp) -> Self {
        let (mean, var) = mlp.running_stats();
        Self::wrap(ModelBody::Mlp {
            spec: mlp.spec().clone(),
            input_dim: mlp.input_dim(),
            params: mlp.params().to_vec(),
            running_mean: mean.to_vec(),
            running_var: var.to_vec(),
        })
    }

    pub fn from_logistic(m: &LinearModel) -> Self {
        Self::wrap(ModelBody::Logistic(m.clone()))
    }

    pub fn from_gbdt(m: &TreeEnsemble) -> Self {
        Self::wrap(ModelBody::Gbdt(m.clone()))
    }

    fn wrap(body: ModelBody) -> Self {
        Self { format_version: MODEL_FORMAT_VERSION, feature_order_hash: feature_order_hash(), body, calibrator: None }
    }

    pub fn with_calibrator(mut self, c: PlattCalibrator) -> Self {
        self.calibrator = Some(c);
        self
    }

    pub fn kind(&self) -> &'static str {
        match self.body {
            ModelBody::Mlp { .. } => "mlp",
            ModelBody::Logistic(_) => "logistic",
            ModelBody::Gbdt(_) => "gbdt",
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    /// Checks the format version and that the model was trained on the
    /// current feature layout, then rebuilds it for prediction.
    pub fn into_loaded(self) -> Result<LoadedModel> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Model(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.feature_order_hash != feature_order_hash() {
            return Err(Error::Model("model was trained on a different feature layout".into()));
        }
        let runnable = match &self.body {
            ModelBody::Mlp { spec, input_dim, params, running_mean, running_var } => Runnable::Mlp(Mlp::from_parts(
                spec.clone(),
                *input_dim,
                params.clone(),
                running_mean.clone(),
                running_var.clone(),
            )?),
            ModelBody::Logistic(m) => Runnable::Logistic(m.clone()),
            ModelBody::Gbdt(m) => Runnable::Gbdt(m.clone()),
        };
        Ok(LoadedModel { envelope: self, runnable })
    }

    pub fn from_json(text: &str) -> Result<LoadedModel> {
        serde_json::from_str::<TrainedModel>(text)?.into_loaded()
    }

    pub fn load(path: &Path) -> Result<LoadedModel> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

impl LoadedModel {
    /// Uncalibrated log-odds.
    pub fn raw_logits(&self, x: &Matrix) -> Result<Vec<f64>> {
        match &self.runnable {
            Runnable::Mlp(m) => m.predict_logits(x),
            Runnable::Logistic(m) => m.predict_logits(x),
            Runnable::Gbdt(m) => m.predict_logits(x),
        }
    }

    pub fn calibrator(&self) -> Option<PlattCalibrator> {
        self.envelope.calibrator
    }
}

/// Log-odds after calibration when a calibrator is attached.
impl RiskModel for LoadedModel {
    fn predict_logits(&self, x: &Matrix) -> Result<Vec<f64>> {
        let raw = self.raw_logits(x)?;
        Ok(match self.envelope.calibrator {
            Some(c) => raw.into_iter().map(|s| c.a * s + c.b).collect(),
            None => raw,
        })
    }
}
