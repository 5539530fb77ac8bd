use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mortality_nas::dataset::CSV_HEADER;
use mortality_nas::nas::SearchConfig;
use mortality_nas::pipeline::PipelineConfig;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mortality-nas"));
    c.arg("--quiet");
    c
}

fn run(args: &[&str], ws: &Path) -> Output {
    bin().args(args).arg("--workspace").arg(ws).output().unwrap()
}

fn small_config_file(dir: &Path) -> std::path::PathBuf {
    let mut c = PipelineConfig::default();
    c.synthetic.scale_total(3_000);
    c.search = SearchConfig { population_size: 3, generations: 1, elite_count: 1, candidate_epochs: 2, ..c.search };
    c.train.max_epochs = 4;
    c.train.patience = Some(2);
    let tuning = SearchConfig { population_size: 2, generations: 1, elite_count: 1, ..SearchConfig::default() };
    c.baselines.logistic_tuning = tuning.clone();
    c.baselines.gbdt_tuning = tuning;
    c.audit.bootstrap_replicates = 20;
    c.audit.permutation_repeats = 1;
    c.audit.shap_budget = 64;
    c.audit.shap_instances = 3;
    c.audit.shap_background = 5;
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&c).unwrap()).unwrap();
    path
}

#[test]
fn generate_writes_the_documented_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["generate"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut r = csv::Reader::from_path(dir.path().join("data/records.csv")).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, CSV_HEADER);
}

#[test]
fn same_seed_gives_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run(&["generate", "--seed", "7"], a.path()).status.success());
    assert!(run(&["generate", "--seed", "7"], b.path()).status.success());
    let fa = fs::read(a.path().join("data/records.csv")).unwrap();
    assert_eq!(fa, fs::read(b.path().join("data/records.csv")).unwrap());
    let c = tempfile::tempdir().unwrap();
    assert!(run(&["generate", "--seed", "8"], c.path()).status.success());
    assert_ne!(fa, fs::read(c.path().join("data/records.csv")).unwrap());
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"search": {"elite_count": 99}}"#).unwrap();
    assert_eq!(run(&["split", "--config", bad.to_str().unwrap()], dir.path()).status.code(), Some(2));

    let missing = dir.path().join("nope.csv");
    assert_eq!(run(&["split", "--data", missing.to_str().unwrap()], dir.path()).status.code(), Some(2));

    let malformed = dir.path().join("malformed.csv");
    fs::write(&malformed, format!("{}\n1,2,3\n", CSV_HEADER.join(","))).unwrap();
    let out = run(&["split", "--strict", "--data", malformed.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("split"));
    assert!(dir.path().join("STALE").exists());
}

#[test]
fn staged_commands_match_the_all_in_one_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config_file(dir.path());
    let cfg = cfg.to_str().unwrap();
    let staged = dir.path().join("staged");
    for stage in
        ["generate", "split", "featurize", "search", "train-baselines", "calibrate", "evaluate", "audit", "explain", "report"]
    {
        let out = run(&[stage, "--config", cfg, "--threads", "1"], &staged);
        assert!(out.status.success(), "{stage}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let all = dir.path().join("all");
    let out = run(&["run", "--config", cfg, "--format", "md"], &all);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read(staged.join("metrics/metrics.json")).unwrap(),
        fs::read(all.join("metrics/metrics.json")).unwrap()
    );
    assert!(all.join("reports/summary.md").exists());
    assert!(!all.join("reports/summary.json").exists());
    assert!(staged.join("reports/summary.json").exists());
}
