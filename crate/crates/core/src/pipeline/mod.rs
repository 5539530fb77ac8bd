//! End-to-end orchestration over a workspace directory. Each stage reads
//! its inputs from the workspace and writes its artifacts back, so stages
//! can run one at a time (as the CLI subcommands do) or all in order.

mod config;
mod report;
mod workspace;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::audit::{
    design_bootstrap, group_importance, sample_background, shap_ranking, subgroup_eval_scores, write_shap_csv,
    BootstrapCI, BootstrapConfig, BootstrapMetric, Grouping, Importance, ShapConfig, ShapRanking, SubgroupReport,
};
use crate::baselines::{train_gbdt, train_logreg, tune_gbdt, tune_logreg, LogRegConfig};
use crate::calibration::fit_platt;
use crate::dataset::{
    check_psu_nesting, generate_synthetic, load_records, temporal_split, write_records, BirthRecord, SplitSet,
};
use crate::error::{Error, Result};
use crate::features::{feature_groups, feature_order_hash, fit_encoder, Encoder, FeatureSet, FEATURE_NAMES};
use crate::linalg::sigmoid;
use crate::metrics::{
    auroc, brier, delong_test, f1_at_threshold, f1_optimal_threshold, max_calibration_gap, reliability_bins,
    sensitivity_at_fraction, weighted_auroc, DeLongResult, ReliabilityBin, TieBreak,
};
use crate::model::{LoadedModel, RiskModel, TrainedModel};
use crate::nas::run_nas;
use crate::neural::{ClassWeighting, ClassWeights, EpochLog};

pub use config::{AuditOptions, BaselineOptions, PipelineConfig, ReportFormat, StageSeeds};
pub use report::{collect_summary, render_markdown, ComparisonRow, ShapRankingDoc, Summary};
pub use workspace::{Workspace, MODEL_NAMES, SPLIT_NAMES};
use workspace::{create_file, read_json, write_json, write_text};

pub const STAGES: [&str; 11] = [
    "generate",
    "split",
    "featurize",
    "search",
    "train-baselines",
    "calibrate",
    "evaluate",
    "audit",
    "explain",
    "report",
    "run",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub source: String,
    pub rows_read: usize,
    pub dropped_rows: usize,
    pub missing_outcome: usize,
    pub complete_case_excluded: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub n: usize,
    pub deaths: usize,
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub name: String,
    pub kind: String,
    pub description: String,
    /// Checksum of the training features the model was fitted on.
    pub input_checksum: String,
    pub validation_auroc: f64,
    pub test_auroc: f64,
    pub test_auroc_weighted: f64,
    pub brier_uncalibrated: f64,
    pub brier_calibrated: f64,
    pub max_gap_uncalibrated: f64,
    pub max_gap_calibrated: f64,
    pub sensitivity_at_screening: f64,
    /// Threshold maximizing F1 on validation, applied to test.
    pub f1_threshold: f64,
    pub f1_test: f64,
    pub calibrator: Option<crate::calibration::PlattCalibrator>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reference: String,
    pub other: String,
    pub delong: DeLongResult,
}

/// Contents of `metrics/metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDoc {
    pub seed: u64,
    pub feature_order_hash: String,
    pub screening_fraction: f64,
    pub splits: BTreeMap<String, SplitMetrics>,
    pub models: Vec<ModelMetrics>,
    pub comparisons: Vec<Comparison>,
}

impl MetricsDoc {
    pub fn model(&self, name: &str) -> Option<&ModelMetrics> {
        self.models.iter().find(|m| m.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditDoc {
    pub model: String,
    pub subgroups: Vec<SubgroupReport>,
    pub importance: Vec<Importance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEntry {
    pub model: String,
    pub metric: BootstrapMetric,
    pub ci: BootstrapCI,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NasTrainingDoc {
    architecture: crate::neural::ArchitectureSpec,
    search_validation_auroc: f64,
    search_evaluations: usize,
    best_epoch: usize,
    epochs_run: usize,
    class_weights: ClassWeights,
    history: Vec<EpochLog>,
}

pub(crate) struct Features {
    pub train: FeatureSet,
    pub validation: FeatureSet,
    pub test: FeatureSet,
}

/// A pipeline bound to a resolved configuration and its workspace.
pub struct Pipeline {
    config: PipelineConfig,
    ws: Workspace,
}

fn write_feature_csv(path: &std::path::Path, set: &FeatureSet) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(create_file(path)?));
    let mut header: Vec<&str> = FEATURE_NAMES.to_vec();
    header.push("died_under5");
    w.write_record(&header)?;
    for i in 0..set.len() {
        let mut row: Vec<String> = set.x.row(i).iter().map(|v| v.to_string()).collect();
        row.push(set.labels[i].to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

impl Pipeline {
    /// Validates the configuration and resolves every stage seed from the global seed.
    pub fn new(config: &PipelineConfig) -> Result<Self> {
        config.validate()?;
        let config = config.resolved();
        let ws = Workspace::new(&config.workspace);
        Ok(Self { config, ws })
    }

    pub fn workspace(&self) -> &Workspace {
        &self.ws
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Runs one named stage, wrapping failures with the stage name and
    /// leaving a STALE marker in the workspace.
    pub fn stage(&self, name: &str) -> Result<()> {
        let stage: &'static str = STAGES
            .iter()
            .find(|s| **s == name)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown stage `{name}`")))?;
        if stage == "run" {
            return self.run().map(|_| ());
        }
        self.ws.create()?;
        let result = match stage {
            "generate" => self.generate(),
            "split" => self.split(),
            "featurize" => self.featurize(),
            "search" => self.search(),
            "train-baselines" => self.train_baselines(),
            "calibrate" => self.calibrate(),
            "evaluate" => self.evaluate().map(|_| ()),
            "audit" => self.audit(),
            "explain" => self.explain(),
            "report" => self.report(),
            _ => unreachable!(),
        };
        result.map_err(|e| {
            let marker = format!("stage `{stage}` failed: {e}\n");
            if let Err(w) = write_text(&self.ws.stale_marker(), &marker) {
                warn!("could not write stale marker: {w}");
            }
            Error::Stage { stage, source: Box::new(e) }
        })
    }

    /// All stages in order. Returns the evaluation metrics.
    pub fn run(&self) -> Result<MetricsDoc> {
        let mut stages: Vec<&str> = Vec::new();
        if self.config.data.is_none() {
            stages.push("generate");
        }
        stages.extend(["split", "featurize", "search", "train-baselines", "calibrate", "evaluate", "audit", "explain", "report"]);
        for s in stages {
            info!("stage {s}");
            self.stage(s)?;
        }
        let stale = self.ws.stale_marker();
        if stale.exists() {
            fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
        }
        read_json(&self.ws.metrics_json())
    }

    fn generate(&self) -> Result<()> {
        let records = generate_synthetic(&self.config.synthetic)?;
        let path = self.ws.records();
        let mut out = BufWriter::new(create_file(&path)?);
        write_records(&mut out, &records).map_err(|e| Error::io(&path, e))?;
        out.flush().map_err(|e| Error::io(&path, e))?;
        info!("wrote {} synthetic records to {}", records.len(), path.display());
        Ok(())
    }

    fn split(&self) -> Result<()> {
        let source = self.config.data.clone().unwrap_or_else(|| self.ws.records());
        let report = load_records(&source, self.config.strict)?;
        for (row, msg) in report.dropped.iter().take(20) {
            warn!("dropped row {row}: {msg}");
        }
        let rows_read = report.records.len() + report.dropped.len() + report.missing_outcome;
        let mut records = report.records;
        let before = records.len();
        if self.config.complete_case {
            records.retain(BirthRecord::is_complete_case);
        }
        let complete_case_excluded = before - records.len();
        check_psu_nesting(&records)?;
        let split = temporal_split(&records)?;
        for (name, part) in SPLIT_NAMES.iter().zip([&split.train, &split.validation, &split.test]) {
            if part.is_empty() {
                return Err(Error::Empty(match *name {
                    "train" => "training split",
                    "validation" => "validation split",
                    _ => "test split",
                }));
            }
            let path = self.ws.split(name);
            let mut out = BufWriter::new(create_file(&path)?);
            write_records(&mut out, part).map_err(|e| Error::io(&path, e))?;
            out.flush().map_err(|e| Error::io(&path, e))?;
        }
        write_json(
            &self.ws.data_summary(),
            &DataSummary {
                source: source.display().to_string(),
                rows_read,
                dropped_rows: report.dropped.len(),
                missing_outcome: report.missing_outcome,
                complete_case_excluded,
                train: split.train.len(),
                validation: split.validation.len(),
                test: split.test.len(),
            },
        )
    }

    fn load_splits(&self) -> Result<SplitSet> {
        let read = |name: &str| load_records(self.ws.split(name), true).map(|r| r.records);
        Ok(SplitSet { train: read("train")?, validation: read("validation")?, test: read("test")? })
    }

    fn featurize(&self) -> Result<()> {
        let splits = self.load_splits()?;
        let encoder = fit_encoder(&splits.train)?;
        write_json(&self.ws.encoder(), &encoder)?;
        for (name, part) in SPLIT_NAMES.iter().zip([&splits.train, &splits.validation, &splits.test]) {
            write_feature_csv(&self.ws.features(name), &encoder.featurize_all(part)?)?;
        }
        Ok(())
    }

    pub(crate) fn load_features(&self) -> Result<Features> {
        let encoder: Encoder = read_json(&self.ws.encoder())?;
        if encoder.feature_order_hash != feature_order_hash() {
            return Err(Error::Model("encoder was fitted for a different feature layout".into()));
        }
        let splits = self.load_splits()?;
        Ok(Features {
            train: encoder.featurize_all(&splits.train)?,
            validation: encoder.featurize_all(&splits.validation)?,
            test: encoder.featurize_all(&splits.test)?,
        })
    }

    fn class_weights(&self, labels: &[u8]) -> ClassWeights {
        match self.config.train.class_weighting {
            ClassWeighting::None => ClassWeights::UNIT,
            ClassWeighting::InverseFrequency => ClassWeights::inverse_frequency(labels),
            ClassWeighting::Fixed(w) => w,
        }
    }

    fn record_training_input(&self, model: &str, checksum: &str) -> Result<()> {
        let path = self.ws.training_inputs();
        let mut map: BTreeMap<String, String> = if path.exists() { read_json(&path)? } else { BTreeMap::new() };
        map.insert(model.to_string(), checksum.to_string());
        write_json(&path, &map)
    }

    fn search(&self) -> Result<()> {
        if self.config.skip_nas {
            let path = self.ws.model("nas");
            if !path.exists() {
                return Err(Error::Config(format!("--skip-nas needs a saved model at {}", path.display())));
            }
            TrainedModel::load(&path)?;
            info!("skipping search; reusing {}", path.display());
            return Ok(());
        }
        let f = self.load_features()?;
        let outcome = run_nas(&f.train, &f.validation, &self.config.search, &self.config.train)?;
        TrainedModel::from_mlp(&outcome.report.mlp).save(&self.ws.model("nas"))?;
        outcome.search.write_history_csv(BufWriter::new(create_file(&self.ws.search_history())?))?;
        write_json(
            &self.ws.nas_training(),
            &NasTrainingDoc {
                architecture: outcome.search.best.decode(),
                search_validation_auroc: outcome.search.best_fitness,
                search_evaluations: outcome.search.evaluations,
                best_epoch: outcome.report.best_epoch,
                epochs_run: outcome.report.epochs_run,
                class_weights: outcome.report.class_weights,
                history: outcome.report.history,
            },
        )?;
        self.record_training_input("nas", &f.train.checksum())
    }

    fn train_baselines(&self) -> Result<()> {
        let opts = &self.config.baselines;
        if !opts.logistic && !opts.gbdt {
            return Ok(());
        }
        let f = self.load_features()?;
        let weights = self.class_weights(&f.train.labels);
        let checksum = f.train.checksum();
        if opts.logistic {
            let res = tune_logreg(&f.train, &f.validation, &opts.logistic_tuning, weights)?;
            res.write_history_csv(BufWriter::new(create_file(&self.ws.tuning_history("logistic"))?))?;
            let cfg = LogRegConfig { class_weights: weights, ..LogRegConfig::default() };
            let fit = train_logreg(&f.train.x, &f.train.labels, res.best.l2, &cfg)?;
            TrainedModel::from_logistic(&fit.model).save(&self.ws.model("logistic"))?;
            self.record_training_input("logistic", &checksum)?;
        }
        if opts.gbdt {
            let res = tune_gbdt(&f.train, &f.validation, &opts.gbdt_tuning, weights)?;
            res.write_history_csv(BufWriter::new(create_file(&self.ws.tuning_history("gbdt"))?))?;
            let e = train_gbdt(&f.train.x, &f.train.labels, &res.best.0, weights, self.config.seeds().gbdt_fit)?;
            TrainedModel::from_gbdt(&e).save(&self.ws.model("gbdt"))?;
            self.record_training_input("gbdt", &checksum)?;
        }
        Ok(())
    }

    /// Trained models present in the workspace, in canonical order.
    pub(crate) fn available_models(&self) -> Result<Vec<(String, LoadedModel)>> {
        let mut out = Vec::new();
        for name in MODEL_NAMES {
            let path = self.ws.model(name);
            if path.exists() {
                out.push((name.to_string(), TrainedModel::load(&path)?));
            }
        }
        if out.is_empty() {
            return Err(Error::Config("no trained models in the workspace".into()));
        }
        Ok(out)
    }

    fn calibrate(&self) -> Result<()> {
        let f = self.load_features()?;
        for (name, model) in self.available_models()? {
            let raw = model.raw_logits(&f.validation.x)?;
            let c = fit_platt(&raw, &f.validation.labels)?;
            info!("{name}: Platt a={:.4} b={:.4}", c.a, c.b);
            model.envelope.clone().with_calibrator(c).save(&self.ws.model(&name))?;
        }
        Ok(())
    }

    fn evaluate(&self) -> Result<MetricsDoc> {
        let f = self.load_features()?;
        let seeds = self.config.seeds();
        let audit = &self.config.audit;
        let inputs: BTreeMap<String, String> =
            if self.ws.training_inputs().exists() { read_json(&self.ws.training_inputs())? } else { BTreeMap::new() };
        let mut models = Vec::new();
        let mut calibrated_scores: Vec<(String, Vec<f64>)> = Vec::new();
        let mut reliability: Vec<(String, bool, Vec<ReliabilityBin>)> = Vec::new();
        let weights: Vec<f64> = f.test.meta.iter().map(|m| m.sampling_weight).collect();
        for (name, model) in self.available_models()? {
            let raw_test: Vec<f64> = model.raw_logits(&f.test.x)?.into_iter().map(sigmoid).collect();
            let cal_test = model.predict_proba(&f.test.x)?;
            let cal_val = model.predict_proba(&f.validation.x)?;
            let (thr, _) = f1_optimal_threshold(&cal_val, &f.validation.labels)?;
            let bins_raw = reliability_bins(&raw_test, &f.test.labels, audit.reliability_bins)?;
            let bins_cal = reliability_bins(&cal_test, &f.test.labels, audit.reliability_bins)?;
            let description = match &model.envelope.body {
                crate::model::ModelBody::Mlp { spec, .. } => format!(
                    "{:?} {:?} dropout {:.3} batch_norm {}",
                    spec.hidden_layer_widths, spec.activation, spec.dropout_rate, spec.batch_norm
                ),
                crate::model::ModelBody::Logistic(m) => format!("l2 {:e}", m.l2),
                crate::model::ModelBody::Gbdt(e) => {
                    let depth = e.trees.iter().map(|t| t.depth()).max().unwrap_or(0);
                    format!("{} trees, depth <= {depth}, learning rate {:e}", e.trees.len(), e.learning_rate)
                }
            };
            models.push(ModelMetrics {
                name: name.clone(),
                kind: model.envelope.kind().to_string(),
                description,
                input_checksum: inputs.get(&name).cloned().unwrap_or_else(|| "unknown".into()),
                validation_auroc: auroc(&cal_val, &f.validation.labels)?,
                test_auroc: auroc(&cal_test, &f.test.labels)?,
                test_auroc_weighted: weighted_auroc(&cal_test, &f.test.labels, &weights)?,
                brier_uncalibrated: brier(&raw_test, &f.test.labels)?,
                brier_calibrated: brier(&cal_test, &f.test.labels)?,
                max_gap_uncalibrated: max_calibration_gap(&bins_raw),
                max_gap_calibrated: max_calibration_gap(&bins_cal),
                sensitivity_at_screening: sensitivity_at_fraction(
                    &cal_test,
                    &f.test.labels,
                    audit.screening_fraction,
                    TieBreak::Random(seeds.ties),
                )?,
                f1_threshold: thr,
                f1_test: f1_at_threshold(&cal_test, &f.test.labels, thr),
                calibrator: model.calibrator(),
            });
            reliability.push((name.clone(), false, bins_raw));
            reliability.push((name.clone(), true, bins_cal));
            calibrated_scores.push((name, cal_test));
        }
        let mut comparisons = Vec::new();
        if let Some((reference, ref_scores)) = calibrated_scores.first() {
            for (other, scores) in &calibrated_scores[1..] {
                comparisons.push(Comparison {
                    reference: reference.clone(),
                    other: other.clone(),
                    delong: delong_test(ref_scores, scores, &f.test.labels)?,
                });
            }
        }
        let mut splits = BTreeMap::new();
        for (name, set) in SPLIT_NAMES.iter().zip([&f.train, &f.validation, &f.test]) {
            splits.insert(
                name.to_string(),
                SplitMetrics { n: set.len(), deaths: set.positives(), checksum: set.checksum() },
            );
        }
        let doc = MetricsDoc {
            seed: self.config.seed,
            feature_order_hash: feature_order_hash(),
            screening_fraction: audit.screening_fraction,
            splits,
            models,
            comparisons,
        };
        write_json(&self.ws.metrics_json(), &doc)?;
        self.write_metrics_csv(&doc)?;
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(BufWriter::new(create_file(&self.ws.reliability())?));
        w.write_record(["model", "calibrated", "lower", "upper", "mean_predicted", "observed_rate", "count"])?;
        for (name, cal, bins) in &reliability {
            for b in bins {
                let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
                w.write_record([
                    name.clone(),
                    cal.to_string(),
                    format!("{:.2}", b.lower),
                    format!("{:.2}", b.upper),
                    opt(b.mean_predicted),
                    opt(b.observed_rate),
                    b.count.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(self.ws.reliability(), e))?;
        Ok(doc)
    }

    fn write_metrics_csv(&self, doc: &MetricsDoc) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(BufWriter::new(create_file(&self.ws.metrics_csv())?));
        w.write_record([
            "model",
            "kind",
            "validation_auroc",
            "test_auroc",
            "test_auroc_weighted",
            "brier_uncalibrated",
            "brier_calibrated",
            "sensitivity_at_screening",
            "f1_threshold",
            "f1_test",
        ])?;
        for m in &doc.models {
            w.write_record([
                m.name.clone(),
                m.kind.clone(),
                format!("{:.6}", m.validation_auroc),
                format!("{:.6}", m.test_auroc),
                format!("{:.6}", m.test_auroc_weighted),
                format!("{:.6}", m.brier_uncalibrated),
                format!("{:.6}", m.brier_calibrated),
                format!("{:.6}", m.sensitivity_at_screening),
                format!("{:.6}", m.f1_threshold),
                format!("{:.6}", m.f1_test),
            ])?;
        }
        w.flush().map_err(|e| Error::io(self.ws.metrics_csv(), e))
    }

    /// The model audited and explained: the network when present.
    fn primary_model(&self) -> Result<(String, LoadedModel)> {
        Ok(self.available_models()?.remove(0))
    }

    fn audit(&self) -> Result<()> {
        let f = self.load_features()?;
        let opts = &self.config.audit;
        let seeds = self.config.seeds();
        let (primary, model) = self.primary_model()?;
        let probs = model.predict_proba(&f.test.x)?;
        let mut subgroups = Vec::new();
        for &g in &opts.groupings {
            let rep = subgroup_eval_scores(&probs, &f.test, g)?;
            let key = match g {
                Grouping::Division => "division",
                Grouping::Residence => "residence",
            };
            rep.write_csv(BufWriter::new(create_file(&self.ws.subgroup_csv(key))?))?;
            subgroups.push(rep);
        }
        let importance = group_importance(
            &model,
            &f.test.x,
            &f.test.labels,
            &feature_groups(),
            opts.permutation_repeats,
            seeds.permutation,
        )?;
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(BufWriter::new(create_file(&self.ws.importance())?));
        w.write_record(["feature_group", "baseline_auroc", "mean_auroc_drop"])?;
        for imp in &importance {
            w.write_record([imp.name.clone(), format!("{:.6}", imp.baseline_auroc), format!("{:.6}", imp.mean_drop)])?;
        }
        w.flush().map_err(|e| Error::io(self.ws.importance(), e))?;
        write_json(&self.ws.audit_json(), &AuditDoc { model: primary, subgroups, importance })?;

        let psu: Vec<i64> = f.test.meta.iter().map(|m| m.psu_id).collect();
        let stratum: Vec<i64> = f.test.meta.iter().map(|m| m.stratum_id).collect();
        let mut entries = Vec::new();
        for (name, m) in self.available_models()? {
            let p = m.predict_proba(&f.test.x)?;
            for metric in [BootstrapMetric::Auroc, BootstrapMetric::Brier] {
                let cfg = BootstrapConfig {
                    metric,
                    replicates: opts.bootstrap_replicates,
                    seed: seeds.bootstrap,
                    lonely_psu: opts.lonely_psu,
                };
                entries.push(BootstrapEntry {
                    model: name.clone(),
                    metric,
                    ci: design_bootstrap(&p, &f.test.labels, &psu, &stratum, &cfg)?,
                });
            }
        }
        write_json(&self.ws.bootstrap(), &entries)
    }

    fn explain(&self) -> Result<()> {
        let f = self.load_features()?;
        let opts = &self.config.audit;
        let seeds = self.config.seeds();
        let (_, model) = self.primary_model()?;
        let background = sample_background(&f.train.x, opts.shap_background, seeds.shap);
        let instances = sample_background(&f.test.x, opts.shap_instances, seeds.shap.wrapping_add(1));
        let cfg = ShapConfig { budget: opts.shap_budget, seed: seeds.shap, output: opts.shap_output };
        let ranking: ShapRanking = shap_ranking(&model, &instances, &background, &FEATURE_NAMES, &feature_groups(), &cfg)?;
        write_shap_csv(BufWriter::new(create_file(&self.ws.shap_values())?), &instances, &FEATURE_NAMES, &ranking.explanations)?;
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(BufWriter::new(create_file(&self.ws.shap_ranking_csv())?));
        w.write_record(["level", "name", "mean_abs_shap"])?;
        for (level, rows) in [("group", &ranking.groups), ("feature", &ranking.features)] {
            for r in rows {
                w.write_record([level.to_string(), r.name.clone(), format!("{:.8}", r.mean_abs)])?;
            }
        }
        w.flush().map_err(|e| Error::io(self.ws.shap_ranking_csv(), e))?;
        write_json(
            &self.ws.shap_ranking(),
            &ShapRankingDoc {
                groups: ranking.groups,
                features: ranking.features,
                instances: instances.rows(),
                background: background.rows(),
                budget: opts.shap_budget,
            },
        )
    }

    fn report(&self) -> Result<()> {
        report::write_reports(&self.ws, &self.config.formats)
    }
}

/// Convenience wrapper: validate, resolve and run every stage.
pub fn run(config: &PipelineConfig) -> Result<MetricsDoc> {
    Pipeline::new(config)?.run()
}
