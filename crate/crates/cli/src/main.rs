use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::error;
use mortality_nas::error::ErrorKind;
use mortality_nas::pipeline::{Pipeline, PipelineConfig, ReportFormat};
use mortality_nas::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "mortality-nas", version, about = "Under-five mortality risk pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON configuration; flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Abort on the first malformed input row instead of skipping it.
    #[arg(long, global = true)]
    strict: bool,
    /// Drop records with any missing optional field before splitting.
    #[arg(long, global = true)]
    complete_case: bool,
    /// Reuse models/nas.json instead of running the search.
    #[arg(long, global = true)]
    skip_nas: bool,
    /// Report formats (repeatable).
    #[arg(long, global = true, value_enum)]
    format: Vec<Format>,
    /// Workspace directory holding data/, models/, metrics/ and reports/.
    #[arg(long, global = true)]
    workspace: Option<PathBuf>,
    /// Input records CSV (instead of synthetic data).
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Log only warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Write synthetic records to data/records.csv.
    Generate,
    /// Temporal train/validation/test split.
    Split,
    /// Fit the encoder on train and featurize every split.
    Featurize,
    /// Architecture search and final retrain of the network.
    Search,
    /// Tune and fit the logistic and boosting baselines.
    TrainBaselines,
    /// Fit Platt scaling on validation scores.
    Calibrate,
    /// Test-split metrics and model comparisons.
    Evaluate,
    /// Subgroup metrics, survey bootstrap and permutation importance.
    Audit,
    /// Kernel SHAP attributions.
    Explain,
    /// Markdown, CSV and JSON summaries.
    Report,
    /// Every stage in order.
    Run,
}

impl Command {
    fn stage(self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Split => "split",
            Command::Featurize => "featurize",
            Command::Search => "search",
            Command::TrainBaselines => "train-baselines",
            Command::Calibrate => "calibrate",
            Command::Evaluate => "evaluate",
            Command::Audit => "audit",
            Command::Explain => "explain",
            Command::Report => "report",
            Command::Run => "run",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
    Md,
}

fn build_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut c = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(t) = cli.threads {
        c.threads = Some(t);
    }
    c.strict |= cli.strict;
    c.complete_case |= cli.complete_case;
    c.skip_nas |= cli.skip_nas;
    if !cli.format.is_empty() {
        c.formats = cli
            .format
            .iter()
            .map(|f| match f {
                Format::Json => ReportFormat::Json,
                Format::Csv => ReportFormat::Csv,
                Format::Md => ReportFormat::Md,
            })
            .collect();
    }
    if let Some(w) = &cli.workspace {
        c.workspace = w.clone();
    }
    if let Some(d) = &cli.data {
        c.data = Some(d.clone());
    }
    Ok(c)
}

fn execute(cli: &Cli) -> Result<()> {
    let config = build_config(cli)?;
    if let Some(t) = config.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let pipeline = Pipeline::new(&config)?;
    pipeline.stage(cli.command.stage())
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Runtime => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            let _ = std::io::stderr().flush();
            ExitCode::from(exit_code(&e))
        }
    }
}
