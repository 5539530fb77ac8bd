use std::ops::Range;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureGroup;
use crate::linalg::Matrix;
use crate::metrics::auroc;
use crate::model::RiskModel;
use crate::rng::{rng_from, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub name: String,
    pub baseline_auroc: f64,
    /// Mean over repeats of `baseline - permuted` AUROC.
    pub mean_drop: f64,
    pub drops: Vec<f64>,
}

/// AUROC drop when the given block of columns is shuffled jointly across
/// rows, averaged over `repeats` shuffles.
pub fn permutation_importance(
    model: &dyn RiskModel,
    x: &Matrix,
    labels: &[u8],
    columns: Range<usize>,
    repeats: usize,
    seed: u64,
) -> Result<Importance> {
    let baseline = auroc(&model.predict_proba(x)?, labels)?;
    block_importance(model, x, labels, "block", columns, repeats, seed, 0, baseline)
}

#[allow(clippy::too_many_arguments)]
fn block_importance(
    model: &dyn RiskModel,
    x: &Matrix,
    labels: &[u8],
    name: &str,
    columns: Range<usize>,
    repeats: usize,
    seed: u64,
    block_id: u64,
    baseline: f64,
) -> Result<Importance> {
    if repeats == 0 {
        return Err(Error::Config("permutation importance needs repeats >= 1".into()));
    }
    if columns.end > x.cols() || columns.is_empty() {
        return Err(Error::Shape(format!("column block {columns:?} outside {} columns", x.cols())));
    }
    let mut drops = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let mut rng = rng_from(seed, &[stream::PERMUTATION, block_id, r as u64]);
        let mut order: Vec<usize> = (0..x.rows()).collect();
        order.shuffle(&mut rng);
        let mut permuted = x.clone();
        for (i, &src) in order.iter().enumerate() {
            for c in columns.clone() {
                permuted.set(i, c, x.get(src, c));
            }
        }
        drops.push(baseline - auroc(&model.predict_proba(&permuted)?, labels)?);
    }
    Ok(Importance {
        name: name.to_string(),
        baseline_auroc: baseline,
        mean_drop: drops.iter().sum::<f64>() / repeats as f64,
        drops,
    })
}

/// Importance of every feature group (one-hot families permuted as a
/// block), sorted by mean drop descending.
pub fn group_importance(
    model: &dyn RiskModel,
    x: &Matrix,
    labels: &[u8],
    groups: &[FeatureGroup],
    repeats: usize,
    seed: u64,
) -> Result<Vec<Importance>> {
    let baseline = auroc(&model.predict_proba(x)?, labels)?;
    let mut out: Vec<Importance> = groups
        .par_iter()
        .enumerate()
        .map(|(g, grp)| block_importance(model, x, labels, grp.name, grp.columns.clone(), repeats, seed, g as u64, baseline))
        .collect::<Result<_>>()?;
    out.sort_by(|a, b| b.mean_drop.total_cmp(&a.mean_drop));
    Ok(out)
}
