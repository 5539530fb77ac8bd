use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::Division;
use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::metrics::{auroc, brier, pearson_r};
use crate::model::RiskModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    Division,
    Residence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub group: String,
    pub n: usize,
    pub deaths: usize,
    pub mortality_per_mille: f64,
    /// Absent when the group has a single outcome class.
    pub auroc: Option<f64>,
    pub brier: f64,
    pub wealth_mean: f64,
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupReport {
    pub grouping: Grouping,
    pub groups: Vec<GroupMetrics>,
    /// Correlation of group wealth with group AUROC, when defined.
    pub gradient_r: Option<f64>,
}

impl SubgroupReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["group", "n", "deaths", "mortality_per_mille", "auroc", "brier", "wealth_mean", "flag"])?;
        for g in &self.groups {
            w.write_record([
                g.group.clone(),
                g.n.to_string(),
                g.deaths.to_string(),
                format!("{:.4}", g.mortality_per_mille),
                g.auroc.map(|a| format!("{a:.6}")).unwrap_or_default(),
                format!("{:.6}", g.brier),
                format!("{:.2}", g.wealth_mean),
                g.flag.clone().unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("subgroup report", e))?;
        Ok(())
    }
}

/// Per-group metrics from one set of predictions (no per-group refitting).
/// Groups appear in canonical order; groups with no records are omitted.
pub fn subgroup_eval_scores(probs: &[f64], set: &FeatureSet, grouping: Grouping) -> Result<SubgroupReport> {
    if probs.len() != set.len() {
        return Err(Error::Shape(format!("{} predictions for {} records", probs.len(), set.len())));
    }
    if set.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    // (label, group index of each record)
    let (names, member): (Vec<String>, Vec<usize>) = match grouping {
        Grouping::Division => (
            Division::ALL.iter().map(|d| d.name().to_string()).collect(),
            set.meta.iter().map(|m| m.division.index()).collect(),
        ),
        Grouping::Residence => (
            vec!["Urban".to_string(), "Rural".to_string()],
            set.meta.iter().map(|m| if m.urban { 0 } else { 1 }).collect(),
        ),
    };
    let mut groups = Vec::new();
    for (k, name) in names.into_iter().enumerate() {
        let idx: Vec<usize> = (0..set.len()).filter(|&i| member[i] == k).collect();
        if idx.is_empty() {
            continue;
        }
        let p: Vec<f64> = idx.iter().map(|&i| probs[i]).collect();
        let y: Vec<u8> = idx.iter().map(|&i| set.labels[i]).collect();
        let deaths = y.iter().filter(|&&v| v == 1).count();
        let single = deaths == 0 || deaths == y.len();
        let auc = if single { None } else { Some(auroc(&p, &y)?) };
        groups.push(GroupMetrics {
            group: name,
            n: idx.len(),
            deaths,
            mortality_per_mille: 1000.0 * deaths as f64 / idx.len() as f64,
            auroc: auc,
            brier: brier(&p, &y)?,
            wealth_mean: idx.iter().map(|&i| set.meta[i].wealth_score).sum::<f64>() / idx.len() as f64,
            flag: single.then(|| "single outcome class; AUROC undefined".to_string()),
        });
    }
    let mut report = SubgroupReport { grouping, groups, gradient_r: None };
    report.gradient_r = equity_gradient(&report).ok();
    Ok(report)
}

pub fn subgroup_eval(model: &dyn RiskModel, set: &FeatureSet, grouping: Grouping) -> Result<SubgroupReport> {
    subgroup_eval_scores(&model.predict_proba(&set.x)?, set, grouping)
}

/// Pearson correlation between group wealth means and group AUROCs.
pub fn equity_gradient(report: &SubgroupReport) -> Result<f64> {
    let (wealth, auc): (Vec<f64>, Vec<f64>) =
        report.groups.iter().filter_map(|g| g.auroc.map(|a| (g.wealth_mean, a))).unzip();
    if auc.len() < 3 {
        return Err(Error::Config(format!("equity gradient needs >= 3 groups with AUROC, have {}", auc.len())));
    }
    pearson_r(&wealth, &auc)
}
