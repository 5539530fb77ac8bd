use log::{info, warn};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{train_gbdt, train_logreg, GbdtHyperparams, LogRegConfig};
use crate::error::Result;
use crate::features::FeatureSet;
use crate::metrics::auroc;
use crate::nas::{evolve, Genome, SearchConfig, SearchResult};
use crate::neural::ClassWeights;
use crate::rng::{derive_seed, Rng};

/// Logistic-regression penalty range (log-uniform).
pub const LOGREG_L2_RANGE: (f64, f64) = (1e-4, 10.0);
/// GBDT l1 range (uniform) and l2 range (log-uniform).
pub const GBDT_L1_RANGE: (f64, f64) = (0.0, 10.0);
pub const GBDT_L2_RANGE: (f64, f64) = (1e-3, 10.0);

fn log_uniform(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    (rng.random_range(lo.ln()..=hi.ln())).exp().clamp(lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegGenome {
    pub l2: f64,
}

impl Genome for LogRegGenome {
    fn random(rng: &mut Rng) -> Self {
        Self { l2: log_uniform(rng, LOGREG_L2_RANGE) }
    }

    fn crossover(&self, other: &Self, rng: &mut Rng) -> Self {
        if rng.random_bool(0.5) {
            self.clone()
        } else {
            other.clone()
        }
    }

    fn mutate(&self, rate: f64, rng: &mut Rng) -> Self {
        if rng.random_bool(rate) {
            Self::random(rng)
        } else {
            self.clone()
        }
    }

    fn complexity(&self) -> usize {
        0
    }

    fn key(&self) -> String {
        self.l2.to_bits().to_string()
    }

    fn csv_header() -> Vec<&'static str> {
        vec!["l2"]
    }

    fn csv_fields(&self) -> Vec<String> {
        vec![format!("{:e}", self.l2)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtGenome(pub GbdtHyperparams);

impl GbdtGenome {
    fn gene(rng: &mut Rng, index: usize) -> GbdtGenome {
        let mut g = GbdtGenome(GbdtHyperparams::default());
        g.set_gene(index, rng);
        g
    }

    fn set_gene(&mut self, index: usize, rng: &mut Rng) {
        let h = &mut self.0;
        match index {
            0 => h.n_estimators = rng.random_range(GbdtHyperparams::N_ESTIMATORS.0..=GbdtHyperparams::N_ESTIMATORS.1),
            1 => h.max_depth = rng.random_range(GbdtHyperparams::MAX_DEPTH.0..=GbdtHyperparams::MAX_DEPTH.1),
            2 => h.learning_rate = log_uniform(rng, GbdtHyperparams::LEARNING_RATE),
            3 => h.subsample = rng.random_range(GbdtHyperparams::SUBSAMPLE.0..=GbdtHyperparams::SUBSAMPLE.1),
            4 => h.l1_reg = rng.random_range(GBDT_L1_RANGE.0..=GBDT_L1_RANGE.1),
            5 => h.l2_reg = log_uniform(rng, GBDT_L2_RANGE),
            _ => unreachable!(),
        }
    }

    fn copy_gene(&mut self, from: &GbdtGenome, index: usize) {
        let (h, f) = (&mut self.0, &from.0);
        match index {
            0 => h.n_estimators = f.n_estimators,
            1 => h.max_depth = f.max_depth,
            2 => h.learning_rate = f.learning_rate,
            3 => h.subsample = f.subsample,
            4 => h.l1_reg = f.l1_reg,
            5 => h.l2_reg = f.l2_reg,
            _ => unreachable!(),
        }
    }
}

const GBDT_GENES: usize = 6;

impl Genome for GbdtGenome {
    fn random(rng: &mut Rng) -> Self {
        let mut g = Self::gene(rng, 0);
        for i in 1..GBDT_GENES {
            g.set_gene(i, rng);
        }
        g
    }

    fn crossover(&self, other: &Self, rng: &mut Rng) -> Self {
        let mut c = self.clone();
        for i in 0..GBDT_GENES {
            if !rng.random_bool(0.5) {
                c.copy_gene(other, i);
            }
        }
        c
    }

    fn mutate(&self, rate: f64, rng: &mut Rng) -> Self {
        let mut c = self.clone();
        for i in 0..GBDT_GENES {
            if rng.random_bool(rate) {
                c.set_gene(i, rng);
            }
        }
        c
    }

    /// Upper bound on leaves in the ensemble.
    fn complexity(&self) -> usize {
        self.0.n_estimators.saturating_mul(1usize << self.0.max_depth.min(40))
    }

    fn key(&self) -> String {
        let h = &self.0;
        format!(
            "{}|{}|{}|{}|{}|{}",
            h.n_estimators,
            h.max_depth,
            h.learning_rate.to_bits(),
            h.subsample.to_bits(),
            h.l1_reg.to_bits(),
            h.l2_reg.to_bits()
        )
    }

    fn csv_header() -> Vec<&'static str> {
        vec!["n_estimators", "max_depth", "learning_rate", "subsample", "l1_reg", "l2_reg"]
    }

    fn csv_fields(&self) -> Vec<String> {
        let h = &self.0;
        vec![
            h.n_estimators.to_string(),
            h.max_depth.to_string(),
            format!("{:e}", h.learning_rate),
            format!("{:.6}", h.subsample),
            format!("{:.6}", h.l1_reg),
            format!("{:e}", h.l2_reg),
        ]
    }
}

/// Runs the shared generational search over a hyperparameter genome.
pub fn tune_ga<G, F>(budget: &SearchConfig, fitness: F) -> Result<SearchResult<G>>
where
    G: Genome,
    F: Fn(&G, u64) -> f64 + Sync,
{
    evolve(budget, fitness)
}

fn validation_auroc(scores: Result<Vec<f64>>, labels: &[u8]) -> f64 {
    match scores.and_then(|s| auroc(&s, labels)) {
        Ok(a) => a,
        Err(e) => {
            warn!("tuning candidate failed: {e}");
            f64::NAN
        }
    }
}

/// Picks the logistic penalty by validation AUROC.
pub fn tune_logreg(
    train: &FeatureSet,
    validation: &FeatureSet,
    budget: &SearchConfig,
    class_weights: ClassWeights,
) -> Result<SearchResult<LogRegGenome>> {
    let cfg = LogRegConfig { class_weights, ..LogRegConfig::default() };
    let res = tune_ga(budget, |g: &LogRegGenome, _| {
        validation_auroc(
            train_logreg(&train.x, &train.labels, g.l2, &cfg).and_then(|f| f.model.predict_proba(&validation.x)),
            &validation.labels,
        )
    })?;
    info!("logistic tuning: l2 {:e}, validation AUROC {:.4}", res.best.l2, res.best_fitness);
    Ok(res)
}

/// Picks boosting hyperparameters by validation AUROC.
pub fn tune_gbdt(
    train: &FeatureSet,
    validation: &FeatureSet,
    budget: &SearchConfig,
    class_weights: ClassWeights,
) -> Result<SearchResult<GbdtGenome>> {
    let res = tune_ga(budget, |g: &GbdtGenome, seed| {
        validation_auroc(
            train_gbdt(&train.x, &train.labels, &g.0, class_weights, derive_seed(seed, &[]))
                .and_then(|e| e.predict_proba(&validation.x)),
            &validation.labels,
        )
    })?;
    info!("boosting tuning: {:?}, validation AUROC {:.4}", res.best.0, res.best_fitness);
    Ok(res)
}
