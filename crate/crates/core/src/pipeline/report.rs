//! Summary tables rendered from the artifacts of a completed run.

use std::fmt::Write as _;
use std::io::BufWriter;

use log::warn;
use serde::{Deserialize, Serialize};

use super::workspace::{create_file, read_json, write_json, write_text};
use super::{AuditDoc, BootstrapEntry, MetricsDoc, ReportFormat, Workspace};
use crate::audit::{equity_gradient, BootstrapMetric, Grouping, RankedAttribution, SubgroupReport};
use crate::error::{Error, Result};

/// Contents of `metrics/shap_ranking.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapRankingDoc {
    pub groups: Vec<RankedAttribution>,
    pub features: Vec<RankedAttribution>,
    pub instances: usize,
    pub background: usize,
    pub budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub kind: String,
    pub test_auroc: f64,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub brier_uncalibrated: f64,
    pub brier_calibrated: f64,
    pub sensitivity_at_screening: f64,
    pub delong_p_vs_reference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub comparison: Vec<ComparisonRow>,
    pub audited_model: Option<String>,
    pub regional: Option<SubgroupReport>,
    pub gradient_r: Option<f64>,
    pub top_groups: Vec<RankedAttribution>,
    pub warnings: Vec<String>,
}

const TOP_SHAP: usize = 10;

fn read_optional<T: serde::de::DeserializeOwned>(path: &std::path::Path, warnings: &mut Vec<String>) -> Result<Option<T>> {
    if !path.exists() {
        let msg = format!("{} is missing", path.display());
        warn!("{msg}");
        warnings.push(msg);
        return Ok(None);
    }
    read_json(path).map(Some)
}

/// Gathers the summary from a workspace. Only the metrics file is required.
pub fn collect_summary(ws: &Workspace) -> Result<Summary> {
    let metrics_path = ws.metrics_json();
    if !metrics_path.exists() {
        return Err(Error::Config(format!(
            "{} not found; run the evaluate stage first",
            metrics_path.display()
        )));
    }
    let metrics: MetricsDoc = read_json(&metrics_path)?;
    let mut warnings = Vec::new();
    let bootstrap: Option<Vec<BootstrapEntry>> = read_optional(&ws.bootstrap(), &mut warnings)?;
    if bootstrap.is_none() {
        warnings.push("confidence intervals unavailable".into());
    }
    let audit: Option<AuditDoc> = read_optional(&ws.audit_json(), &mut warnings)?;
    let shap: Option<ShapRankingDoc> = read_optional(&ws.shap_ranking(), &mut warnings)?;

    let reference = metrics.models.first().map(|m| m.name.clone());
    let comparison = metrics
        .models
        .iter()
        .map(|m| {
            let ci = bootstrap.as_ref().and_then(|b| {
                b.iter().find(|e| e.model == m.name && e.metric == BootstrapMetric::Auroc).map(|e| &e.ci)
            });
            let p = metrics
                .comparisons
                .iter()
                .find(|c| Some(&c.reference) == reference.as_ref() && c.other == m.name)
                .map(|c| c.delong.p_value);
            ComparisonRow {
                model: m.name.clone(),
                kind: m.kind.clone(),
                test_auroc: m.test_auroc,
                ci_lower: ci.map(|c| c.lower),
                ci_upper: ci.map(|c| c.upper),
                brier_uncalibrated: m.brier_uncalibrated,
                brier_calibrated: m.brier_calibrated,
                sensitivity_at_screening: m.sensitivity_at_screening,
                delong_p_vs_reference: p,
            }
        })
        .collect();
    let regional = audit
        .as_ref()
        .and_then(|a| a.subgroups.iter().find(|s| s.grouping == Grouping::Division).cloned());
    let gradient_r = match &regional {
        Some(r) => match equity_gradient(r) {
            Ok(v) => Some(v),
            Err(e) => {
                warnings.push(format!("equity gradient undefined: {e}"));
                None
            }
        },
        None => None,
    };
    let top_groups = shap.map(|s| s.groups.into_iter().take(TOP_SHAP).collect()).unwrap_or_default();
    Ok(Summary {
        seed: metrics.seed,
        comparison,
        audited_model: audit.map(|a| a.model),
        regional,
        gradient_r,
        top_groups,
        warnings,
    })
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "—".into())
}

/// Markdown rendering of a summary.
pub fn render_markdown(s: &Summary) -> String {
    let mut md = String::new();
    let _ = writeln!(md, "# Under-five mortality risk models\n");
    let _ = writeln!(md, "Seed: {}\n", s.seed);
    for w in &s.warnings {
        let _ = writeln!(md, "> warning: {w}");
    }
    if !s.warnings.is_empty() {
        md.push('\n');
    }
    let _ = writeln!(md, "## Model comparison (test split)\n");
    let _ = writeln!(md, "| Model | Kind | AUROC | 95% CI | Brier (raw) | Brier (calibrated) | Sensitivity @ screening | DeLong p |");
    let _ = writeln!(md, "|---|---|---|---|---|---|---|---|");
    for r in &s.comparison {
        let ci = match (r.ci_lower, r.ci_upper) {
            (Some(l), Some(u)) => format!("{l:.3}–{u:.3}"),
            _ => "—".into(),
        };
        let _ = writeln!(
            md,
            "| {} | {} | {:.3} | {} | {:.4} | {:.4} | {:.3} | {} |",
            r.model,
            r.kind,
            r.test_auroc,
            ci,
            r.brier_uncalibrated,
            r.brier_calibrated,
            r.sensitivity_at_screening,
            opt(r.delong_p_vs_reference, 4)
        );
    }
    md.push('\n');
    if let Some(reg) = &s.regional {
        let model = s.audited_model.as_deref().unwrap_or("model");
        let _ = writeln!(md, "## Regional performance ({model})\n");
        let _ = writeln!(md, "| Division | N | Deaths | Rate (‰) | AUROC | Wealth score |");
        let _ = writeln!(md, "|---|---|---|---|---|---|");
        for g in &reg.groups {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {:.1} | {} | {:.2} |",
                g.group,
                g.n,
                g.deaths,
                g.mortality_per_mille,
                opt(g.auroc, 3),
                g.wealth_mean
            );
        }
        let _ = writeln!(md, "\nWealth vs AUROC Pearson r: {}\n", opt(s.gradient_r, 3));
    }
    if !s.top_groups.is_empty() {
        let _ = writeln!(md, "## Top predictors (mean |SHAP|)\n");
        let _ = writeln!(md, "| Rank | Predictor | Mean abs SHAP |");
        let _ = writeln!(md, "|---|---|---|");
        for (i, g) in s.top_groups.iter().enumerate() {
            let _ = writeln!(md, "| {} | {} | {:.4} |", i + 1, g.name, g.mean_abs);
        }
        md.push('\n');
    }
    md
}

fn write_comparison_csv(ws: &Workspace, s: &Summary) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(create_file(&ws.comparison_csv())?));
    w.write_record([
        "model",
        "kind",
        "test_auroc",
        "ci_lower",
        "ci_upper",
        "brier_uncalibrated",
        "brier_calibrated",
        "sensitivity_at_screening",
        "delong_p",
    ])?;
    let o = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for r in &s.comparison {
        w.write_record([
            r.model.clone(),
            r.kind.clone(),
            format!("{:.6}", r.test_auroc),
            o(r.ci_lower),
            o(r.ci_upper),
            format!("{:.6}", r.brier_uncalibrated),
            format!("{:.6}", r.brier_calibrated),
            format!("{:.6}", r.sensitivity_at_screening),
            o(r.delong_p_vs_reference),
        ])?;
    }
    w.flush().map_err(|e| Error::io(ws.comparison_csv(), e))
}

/// Writes the summary in each requested format under `reports/`.
pub(crate) fn write_reports(ws: &Workspace, formats: &[ReportFormat]) -> Result<()> {
    let summary = collect_summary(ws)?;
    for f in formats {
        match f {
            ReportFormat::Md => write_text(&ws.summary("md"), &render_markdown(&summary))?,
            ReportFormat::Json => write_json(&ws.summary("json"), &summary)?,
            ReportFormat::Csv => {
                write_comparison_csv(ws, &summary)?;
                if let Some(reg) = &summary.regional {
                    reg.write_csv(BufWriter::new(create_file(&ws.regional_csv())?))?;
                }
            }
        }
    }
    Ok(())
}
