use std::collections::BTreeMap;

use log::warn;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{auroc, brier};
use crate::rng::{rng_from, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMetric {
    Auroc,
    Brier,
}

impl BootstrapMetric {
    fn eval(self, scores: &[f64], labels: &[u8]) -> Result<f64> {
        match self {
            BootstrapMetric::Auroc => auroc(scores, labels),
            BootstrapMetric::Brier => brier(scores, labels),
        }
    }
}

/// What to do with a stratum that has a single PSU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LonelyPsu {
    Error,
    /// Keep the PSU in every replicate, contributing no variance.
    Certainty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub metric: BootstrapMetric,
    pub replicates: usize,
    pub seed: u64,
    pub lonely_psu: LonelyPsu,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { metric: BootstrapMetric::Auroc, replicates: 1000, seed: 42, lonely_psu: LonelyPsu::Error }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCI {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub replicates: usize,
    /// Replicates dropped because they drew a single outcome class.
    pub skipped: usize,
    pub seed: u64,
    /// All usable replicates gave the same value.
    pub degenerate: bool,
}

/// Linear-interpolation percentile of sorted values.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile CI from resampling PSUs with replacement within each stratum.
pub fn design_bootstrap(
    scores: &[f64],
    labels: &[u8],
    psu: &[i64],
    stratum: &[i64],
    config: &BootstrapConfig,
) -> Result<BootstrapCI> {
    let n = scores.len();
    if labels.len() != n || psu.len() != n || stratum.len() != n {
        return Err(Error::Shape("scores, labels, psu and stratum must have equal length".into()));
    }
    if n == 0 {
        return Err(Error::Empty("bootstrap input"));
    }
    if config.replicates == 0 {
        return Err(Error::Config("bootstrap needs at least one replicate".into()));
    }
    let point = config.metric.eval(scores, labels)?;

    let mut design: BTreeMap<i64, BTreeMap<i64, Vec<usize>>> = BTreeMap::new();
    for i in 0..n {
        design.entry(stratum[i]).or_default().entry(psu[i]).or_default().push(i);
    }
    let mut strata: Vec<Vec<Vec<usize>>> = Vec::with_capacity(design.len());
    let mut fixed: Vec<usize> = Vec::new();
    for (s, psus) in design {
        if psus.len() < 2 {
            match config.lonely_psu {
                LonelyPsu::Error => return Err(Error::LonelyPsu(s)),
                LonelyPsu::Certainty => fixed.extend(psus.into_values().flatten()),
            }
        } else {
            strata.push(psus.into_values().collect());
        }
    }

    let values: Vec<Option<f64>> = (0..config.replicates)
        .into_par_iter()
        .map(|b| -> Result<Option<f64>> {
            let mut rng = rng_from(config.seed, &[stream::BOOTSTRAP, b as u64]);
            let mut idx = fixed.clone();
            for psus in &strata {
                for _ in 0..psus.len() {
                    idx.extend_from_slice(&psus[rng.random_range(0..psus.len())]);
                }
            }
            let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            match config.metric.eval(&s, &y) {
                Ok(v) => Ok(Some(v)),
                Err(Error::SingleClass) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let mut used: Vec<f64> = values.into_iter().flatten().collect();
    let skipped = config.replicates - used.len();
    if used.is_empty() {
        return Err(Error::SingleClass);
    }
    if skipped as f64 > 0.05 * config.replicates as f64 {
        warn!("{skipped} of {} bootstrap replicates had a single outcome class", config.replicates);
    }
    used.sort_by(f64::total_cmp);
    let lower = percentile(&used, 0.025);
    let upper = percentile(&used, 0.975);
    let degenerate = used[0] == used[used.len() - 1];
    if degenerate {
        warn!("bootstrap replicates are all identical; zero-width interval");
    }
    if !(lower <= point && point <= upper) {
        warn!("point estimate {point:.4} lies outside its interval [{lower:.4}, {upper:.4}]");
    }
    Ok(BootstrapCI { point, lower, upper, replicates: config.replicates, skipped, seed: config.seed, degenerate })
}
