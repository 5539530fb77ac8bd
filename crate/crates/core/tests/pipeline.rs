use std::fs;
use std::path::Path;

use mortality_nas::error::ErrorKind;
use mortality_nas::nas::SearchConfig;
use mortality_nas::pipeline::{MetricsDoc, Pipeline, PipelineConfig, Summary};
use mortality_nas::Error;

fn small_config(workspace: &Path) -> PipelineConfig {
    let mut c = PipelineConfig { workspace: workspace.to_path_buf(), seed: 11, ..Default::default() };
    c.synthetic.scale_total(4_000);
    c.search = SearchConfig { population_size: 4, generations: 2, elite_count: 1, candidate_epochs: 2, ..c.search };
    c.train.max_epochs = 6;
    c.train.patience = Some(2);
    let tuning = SearchConfig { population_size: 3, generations: 1, elite_count: 1, ..SearchConfig::default() };
    c.baselines.logistic_tuning = tuning.clone();
    c.baselines.gbdt_tuning = tuning;
    c.audit.bootstrap_replicates = 40;
    c.audit.permutation_repeats = 2;
    c.audit.shap_budget = 128;
    c.audit.shap_instances = 5;
    c.audit.shap_background = 10;
    c
}

const ARTIFACTS: [&str; 22] = [
    "data/records.csv",
    "data/train.csv",
    "data/validation.csv",
    "data/test.csv",
    "data/features_train.csv",
    "metrics/data_summary.json",
    "models/encoder.json",
    "models/nas.json",
    "models/logistic.json",
    "models/gbdt.json",
    "metrics/search_history.csv",
    "metrics/metrics.json",
    "metrics/metrics.csv",
    "metrics/reliability.csv",
    "metrics/subgroup_division.csv",
    "metrics/subgroup_residence.csv",
    "metrics/bootstrap.json",
    "metrics/shap_values.csv",
    "metrics/shap_ranking.json",
    "reports/summary.md",
    "reports/summary.json",
    "reports/comparison.csv",
];

#[test]
fn full_run_writes_every_artifact_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    let cfg = small_config(&ws);
    let doc = mortality_nas::pipeline::run(&cfg).unwrap();
    for a in ARTIFACTS {
        assert!(ws.join(a).exists(), "missing {a}");
    }
    assert!(!ws.join("STALE").exists());
    assert_eq!(doc.models.len(), 3);
    assert_eq!(doc.comparisons.len(), 2);
    let checksums: Vec<&str> = doc.models.iter().map(|m| m.input_checksum.as_str()).collect();
    assert!(checksums.iter().all(|c| *c == checksums[0] && *c != "unknown"));

    // every CSV parses back with a consistent width
    for a in ARTIFACTS.iter().filter(|a| a.ends_with(".csv")) {
        let mut r = csv::Reader::from_path(ws.join(a)).unwrap();
        let width = r.headers().unwrap().len();
        for rec in r.records() {
            assert_eq!(rec.unwrap().len(), width, "{a}");
        }
    }
    let summary: Summary = serde_json::from_str(&fs::read_to_string(ws.join("reports/summary.json")).unwrap()).unwrap();
    assert_eq!(summary.comparison.len(), 3);
    let md = fs::read_to_string(ws.join("reports/summary.md")).unwrap();
    for m in ["nas", "logistic", "gbdt"] {
        assert_eq!(md.lines().filter(|l| l.starts_with(&format!("| {m} |"))).count(), 1, "{m}");
    }
    let regional = summary.regional.as_ref().unwrap();
    assert_eq!(regional.groups.len(), 8);

    let first = fs::read(ws.join("metrics/metrics.json")).unwrap();
    let ws2 = dir.path().join("ws2");
    mortality_nas::pipeline::run(&small_config(&ws2)).unwrap();
    assert_eq!(first, fs::read(ws2.join("metrics/metrics.json")).unwrap());

    // evaluation-only rerun on the saved network
    let nas_before = fs::read(ws.join("models/nas.json")).unwrap();
    let mut skip = small_config(&ws);
    skip.skip_nas = true;
    skip.data = Some(ws.join("data/records.csv"));
    let again: MetricsDoc = mortality_nas::pipeline::run(&skip).unwrap();
    assert_eq!(again.model("nas").unwrap().test_auroc, doc.model("nas").unwrap().test_auroc);
    let nas_after: serde_json::Value = serde_json::from_slice(&fs::read(ws.join("models/nas.json")).unwrap()).unwrap();
    let nas_before: serde_json::Value = serde_json::from_slice(&nas_before).unwrap();
    assert_eq!(nas_after["body"], nas_before["body"]);

    // report without bootstrap output renders dashes
    fs::remove_file(ws.join("metrics/bootstrap.json")).unwrap();
    Pipeline::new(&small_config(&ws)).unwrap().stage("report").unwrap();
    let md = fs::read_to_string(ws.join("reports/summary.md")).unwrap();
    assert!(md.contains("warning"));
    assert!(md.lines().filter(|l| l.starts_with("| nas |")).all(|l| l.contains("| — |")));
}

#[test]
fn failing_stage_is_named_and_marks_workspace_stale() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(&small_config(dir.path())).unwrap();
    let err = p.stage("featurize").unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "featurize", .. }));
    assert!(err.to_string().contains("featurize"));
    assert!(dir.path().join("STALE").exists());
}

#[test]
fn skip_nas_without_saved_model_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config(dir.path());
    c.skip_nas = true;
    let p = Pipeline::new(&c).unwrap();
    p.stage("generate").unwrap();
    p.stage("split").unwrap();
    p.stage("featurize").unwrap();
    let err = p.stage("search").unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Config);
}

#[test]
fn report_requires_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let err = Pipeline::new(&small_config(dir.path())).unwrap().stage("report").unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Config);
}

#[test]
fn unknown_config_fields_and_bad_values_are_rejected() {
    assert!(PipelineConfig::from_json(r#"{"seed": 3, "search": {"population_size": 1}}"#)
        .and_then(|c| Pipeline::new(&c).map(|_| ()))
        .is_err());
    let c = PipelineConfig::from_json(r#"{"seed": 3}"#).unwrap();
    assert_eq!(c.seed, 3);
    let resolved = Pipeline::new(&c).unwrap();
    assert_ne!(resolved.config().search.seed, PipelineConfig::default().search.seed);
}
