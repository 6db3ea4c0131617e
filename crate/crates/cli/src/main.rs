//! `mqag`: score summaries against their sources and evaluate the scores
//! against human judgements.
//!
//! Exit codes: 0 success, 1 usage, 2 backend, 3 data.

mod error;
mod output;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mqag_core::backend::{BackendDescriptor, BackendKind, DEFAULT_MAX_CONNECTIONS, DEFAULT_MAX_RETRIES};
use mqag_core::distributions::bernoulli_curves;
use mqag_core::harness::{
    abstractiveness_split, answerability_sweep, convergence_curve, correlate, load_dataset, score_dataset,
    ConvergenceConfig, DatasetFormat, RecordKey, Resampling, ScoreTable, DEFAULT_BOOTSTRAP_REPLICATES, DEFAULT_N_GRID,
    DEFAULT_THRESHOLDS,
};
use mqag_core::scoring::DEFAULT_NUM_QUESTIONS;
use mqag_core::{score_pair, Backend, DistanceKind, EvalDataset, Level, ScoreConfig, ScoreReport, Variant};
use serde::Serialize;
use serde_json::{json, Value};
use tracing::info;

use crate::error::{CliError, EXIT_USAGE};
use crate::output::Staged;

#[derive(Debug, Parser)]
#[command(name = "mqag", version, about = "Multiple-choice question consistency scoring for summaries")]
struct Cli {
    /// More logging (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score one summary against its source.
    Score(ScoreArgs),
    /// Score a dataset and correlate with its human scores.
    Evaluate(EvaluateArgs),
    /// Correlation as a function of the answerability threshold.
    Sweep(SweepArgs),
    /// Bootstrap correlation as a function of the number of questions.
    Convergence(ConvergenceArgs),
    /// Distances between pairs of Bernoulli distributions.
    Distances(DistancesArgs),
}

/// Answerability threshold: a number in [1, K] or `off`.
#[derive(Debug, Clone, Copy)]
struct Threshold(Option<f64>);

fn parse_threshold(s: &str) -> Result<Threshold, String> {
    if s.eq_ignore_ascii_case("off") {
        return Ok(Threshold(None));
    }
    s.parse::<f64>()
        .ok()
        .filter(|t| t.is_finite())
        .map(|t| Threshold(Some(t)))
        .ok_or_else(|| format!("expected a number or 'off', got '{s}'"))
}

#[derive(Debug, Args)]
struct ScoringArgs {
    /// sum, src or f1
    #[arg(long, default_value = "sum")]
    variant: Variant,
    /// kl, ob, tv or hl
    #[arg(long, default_value = "tv")]
    distance: DistanceKind,
    /// Questions to generate per run.
    #[arg(long = "n", default_value_t = DEFAULT_NUM_QUESTIONS)]
    num_questions: usize,
    /// Options per question.
    #[arg(long = "k", default_value_t = mqag_core::backend::DEFAULT_NUM_OPTIONS)]
    num_options: usize,
    /// Maximum effective number of options to keep a question, or `off`.
    #[arg(long, default_value = "2.0", value_parser = parse_threshold)]
    threshold: Threshold,
    #[arg(long)]
    seed: Option<u64>,
}

impl ScoringArgs {
    fn config(&self) -> ScoreConfig {
        ScoreConfig {
            variant: self.variant,
            distance: self.distance,
            num_questions: self.num_questions,
            num_options: self.num_options,
            answerability_threshold: self.threshold.0,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendChoice {
    Mock,
    Remote,
}

#[derive(Debug, Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value = "mock")]
    backend: BackendChoice,
    /// Base URL of an mqag/1 model service.
    #[arg(long, env = "MQAG_BACKEND_URL")]
    endpoint: Option<String>,
    #[arg(long, env = "MQAG_BACKEND_TOKEN", hide_env_values = true)]
    token: Option<String>,
    /// Request timeout in seconds.
    #[arg(long, default_value_t = 120.0)]
    timeout: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_RETRIES)]
    retries: u32,
    #[arg(long, default_value_t = DEFAULT_MAX_CONNECTIONS)]
    max_connections: usize,
}

impl BackendArgs {
    fn build(&self) -> Result<std::sync::Arc<dyn Backend>, CliError> {
        if !(self.timeout.is_finite() && self.timeout > 0.0) {
            return Err(CliError::Usage(format!("--timeout must be positive, got {}", self.timeout)));
        }
        let descriptor = match self.backend {
            BackendChoice::Mock => BackendDescriptor::mock(),
            BackendChoice::Remote => {
                let endpoint = self.endpoint.clone().ok_or_else(|| {
                    CliError::Usage("--backend remote needs --endpoint or MQAG_BACKEND_URL".into())
                })?;
                BackendDescriptor {
                    kind: BackendKind::Remote,
                    endpoint: Some(endpoint),
                    timeout: Duration::from_secs_f64(self.timeout),
                    max_retries: self.retries,
                    max_connections: self.max_connections,
                    token: self.token.clone(),
                }
            }
        };
        Ok(descriptor.build()?)
    }
}

#[derive(Debug, Args)]
struct DatasetArgs {
    /// Line-delimited records, or a `.json` document.
    dataset: PathBuf,
    /// Correlation level; defaults to the dataset's own.
    #[arg(long)]
    level: Option<Level>,
    /// Keep only these systems (comma separated).
    #[arg(long, value_delimiter = ',')]
    systems: Vec<String>,
    /// Records scored in parallel.
    #[arg(long, default_value_t = default_jobs())]
    jobs: usize,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl DatasetArgs {
    fn load(&self) -> Result<(EvalDataset, Level), CliError> {
        let mut dataset = load_dataset(&self.dataset, DatasetFormat::from_path(&self.dataset))?;
        if !self.systems.is_empty() {
            dataset = dataset.retain_systems(&self.systems)?;
        }
        let level = self.level.unwrap_or(dataset.level);
        dataset.validate_for(level)?;
        info!(name = %dataset.name, records = dataset.records.len(), %level, "dataset loaded");
        Ok((dataset, level))
    }
}

#[derive(Debug, Args)]
struct ScoreArgs {
    source: PathBuf,
    summary: PathBuf,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[command(flatten)]
    backend: BackendArgs,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Split {
    Abstractiveness,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[command(flatten)]
    backend: BackendArgs,
    /// Also correlate the low and high halves of this split.
    #[arg(long, value_enum)]
    split: Option<Split>,
    /// Output directory for results.json and scores.csv.
    #[arg(long, default_value = "mqag-out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_THRESHOLDS)]
    thresholds: Vec<f64>,
    /// Output CSV.
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ResamplingChoice {
    Bootstrap,
    Prefix,
}

#[derive(Debug, Args)]
struct ConvergenceArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_N_GRID)]
    n_grid: Vec<usize>,
    /// Bootstrap replicates per grid point.
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP_REPLICATES)]
    replicates: usize,
    #[arg(long, value_enum, default_value = "bootstrap")]
    resampling: ResamplingChoice,
    /// Output CSV.
    #[arg(long, default_value = "convergence.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DistancesArgs {
    /// Grid points for the second distribution.
    #[arg(long, default_value_t = 101)]
    resolution: usize,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    init_logging(cli.verbose);
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Score(args) => cmd_score(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Convergence(args) => cmd_convergence(args),
        Command::Distances(args) => cmd_distances(args),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Writes to stdout; a reader that went away early is not an error.
fn emit(write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), CliError> {
    let mut stdout = std::io::stdout().lock();
    match write(&mut stdout).and_then(|()| stdout.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Data(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn announce(paths: &[PathBuf]) -> Result<(), CliError> {
    emit(|out| paths.iter().try_for_each(|p| writeln!(out, "{}", p.display())))
}

fn cmd_score(args: ScoreArgs) -> Result<(), CliError> {
    let config = args.scoring.config();
    config.validate()?;
    let source = read_text(&args.source)?;
    let summary = read_text(&args.summary)?;
    let backend = args.backend.build()?;
    let report = score_pair(&source, &summary, &config, backend.as_ref())?;
    match args.out {
        Some(path) => {
            let mut staged = Staged::new();
            staged.json(&path, &report)?;
            announce(&staged.commit()?)?;
        }
        None => {
            let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Data(e.to_string()))?;
            emit(|out| writeln!(out, "{text}"))?;
        }
    }
    Ok(())
}

fn score_all(
    dataset: &EvalDataset,
    scoring: &ScoringArgs,
    backend: &BackendArgs,
    jobs: usize,
) -> Result<(ScoreConfig, Vec<(RecordKey, ScoreReport)>), CliError> {
    let config = scoring.config();
    config.validate()?;
    let backend = backend.build()?;
    let reports = score_dataset(dataset, &config, backend.as_ref(), jobs.max(1))?;
    Ok((config, reports))
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    system_id: &'a str,
    doc_id: &'a str,
    score: f64,
    human_score: f64,
    n_kept: usize,
}

fn correlation_json(level: Level, metric: &ScoreTable, human: &ScoreTable) -> Value {
    match correlate(level, metric, human) {
        Ok(c) => json!(c),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

fn restrict(table: &ScoreTable, keys: &[RecordKey]) -> ScoreTable {
    keys.iter().map(|k| (k.clone(), table[k])).collect()
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let (dataset, level) = args.data.load()?;
    let (config, reports) = score_all(&dataset, &args.scoring, &args.backend, args.data.jobs)?;
    let human = dataset.human_scores();
    let metric: ScoreTable = reports.iter().map(|(k, r)| (k.clone(), r.score)).collect();

    let mut correlations = serde_json::Map::new();
    correlations.insert("level".into(), json!(level));
    correlations.insert("all".into(), json!(correlate(level, &metric, &human)?));
    if let Some(Split::Abstractiveness) = args.split {
        let (low, high) = abstractiveness_split(&dataset)?;
        for (name, half) in [("low", low), ("high", high)] {
            let keys: Vec<RecordKey> = half.iter().map(|r| r.key()).collect();
            correlations.insert(
                format!("abstractiveness_{name}"),
                json!({
                    "n_records": keys.len(),
                    "correlation": correlation_json(level, &restrict(&metric, &keys), &restrict(&human, &keys)),
                }),
            );
        }
    }

    let mut curves = serde_json::Map::new();
    if config.variant != Variant::F1 {
        let by_key: BTreeMap<RecordKey, ScoreReport> = reports.iter().cloned().collect();
        let thresholds: Vec<f64> = DEFAULT_THRESHOLDS
            .iter()
            .copied()
            .filter(|&t| t <= config.num_options as f64)
            .collect();
        curves.insert(
            "answerability".into(),
            json!(answerability_sweep(&by_key, &human, level, &thresholds)?),
        );
    }

    let per_record: Vec<Value> = reports
        .iter()
        .map(|((system_id, doc_id), r)| {
            json!({
                "system_id": system_id,
                "doc_id": doc_id,
                "score": r.score,
                "sum_score": r.sum_score,
                "src_score": r.src_score,
                "n_generated": r.n_generated(),
                "n_kept": r.n_kept(),
                "human_score": human[&(system_id.clone(), doc_id.clone())],
            })
        })
        .collect();
    let results = json!({
        "dataset": dataset.name,
        "config": config,
        "per_record": per_record,
        "correlations": correlations,
        "curves": curves,
    });
    let rows: Vec<ScoreRow> = reports
        .iter()
        .map(|((system_id, doc_id), r)| ScoreRow {
            system_id,
            doc_id,
            score: r.score,
            human_score: human[&(system_id.clone(), doc_id.clone())],
            n_kept: r.n_kept(),
        })
        .collect();

    let mut staged = Staged::new();
    staged.json(&args.out.join("results.json"), &results)?;
    staged.csv(&args.out.join("scores.csv"), &rows)?;
    announce(&staged.commit()?)?;
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    threshold: f64,
    pearson: f64,
    spearman: f64,
    n_used: usize,
    n_skipped: usize,
    mean_kept: f64,
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    if args.scoring.variant == Variant::F1 {
        return Err(CliError::Usage("sweep supports --variant sum or src".into()));
    }
    if args.thresholds.is_empty() {
        return Err(CliError::Usage("--thresholds must not be empty".into()));
    }
    let k = args.scoring.num_options as f64;
    if let Some(t) = args.thresholds.iter().find(|t| !(1.0..=k).contains(*t)) {
        return Err(CliError::Usage(format!("--thresholds value {t} outside [1, {k}]")));
    }
    let (dataset, level) = args.data.load()?;
    let (_, reports) = score_all(&dataset, &args.scoring, &args.backend, args.data.jobs)?;
    let reports: BTreeMap<RecordKey, ScoreReport> = reports.into_iter().collect();
    let curve = answerability_sweep(&reports, &dataset.human_scores(), level, &args.thresholds)?;
    let rows: Vec<SweepRow> = curve
        .iter()
        .map(|p| SweepRow {
            threshold: p.threshold,
            pearson: p.correlation.pearson,
            spearman: p.correlation.spearman,
            n_used: p.correlation.n_used,
            n_skipped: p.correlation.n_skipped,
            mean_kept: p.mean_kept,
        })
        .collect();
    let mut staged = Staged::new();
    staged.csv(&args.out, &rows)?;
    announce(&staged.commit()?)?;
    Ok(())
}

#[derive(Serialize)]
struct ConvergenceRow {
    n: usize,
    mean: f64,
    std: f64,
    mean_spearman: f64,
    std_spearman: f64,
    n_undefined: usize,
}

fn cmd_convergence(args: ConvergenceArgs) -> Result<(), CliError> {
    let max_n = args.n_grid.iter().copied().max().unwrap_or(0);
    if max_n == 0 || args.n_grid.contains(&0) {
        return Err(CliError::Usage("--n-grid needs positive question counts".into()));
    }
    if args.scoring.num_questions < max_n {
        return Err(CliError::Usage(format!(
            "--n {} is smaller than the largest grid point {max_n}",
            args.scoring.num_questions
        )));
    }
    if args.replicates == 0 {
        return Err(CliError::Usage("--replicates must be at least 1".into()));
    }
    let (dataset, level) = args.data.load()?;
    // resample from every generated question
    let scoring = ScoringArgs {
        threshold: Threshold(None),
        ..args.scoring
    };
    let (_, reports) = score_all(&dataset, &scoring, &args.backend, args.data.jobs)?;
    let distances: BTreeMap<RecordKey, Vec<f64>> = reports
        .iter()
        .map(|(k, r)| (k.clone(), r.runs[0].questions.iter().map(|q| q.distance).collect()))
        .collect();
    let config = ConvergenceConfig {
        level,
        n_grid: args.n_grid.clone(),
        replicates: args.replicates,
        seed: scoring.seed.unwrap_or(0),
        resampling: match args.resampling {
            ResamplingChoice::Bootstrap => Resampling::Bootstrap,
            ResamplingChoice::Prefix => Resampling::Prefix,
        },
    };
    let curve = convergence_curve(&distances, &dataset.human_scores(), &config)?;
    let rows: Vec<ConvergenceRow> = curve
        .iter()
        .map(|p| ConvergenceRow {
            n: p.n,
            mean: p.mean_pearson,
            std: p.std_pearson,
            mean_spearman: p.mean_spearman,
            std_spearman: p.std_spearman,
            n_undefined: p.n_undefined,
        })
        .collect();
    let mut staged = Staged::new();
    staged.csv(&args.out, &rows)?;
    announce(&staged.commit()?)?;
    Ok(())
}

fn cmd_distances(args: DistancesArgs) -> Result<(), CliError> {
    let points = bernoulli_curves(args.resolution)?;
    match args.out {
        Some(path) => {
            let mut staged = Staged::new();
            staged.csv(&path, &points)?;
            announce(&staged.commit()?)?;
        }
        None => {
            let mut writer = csv::Writer::from_writer(Vec::new());
            for p in &points {
                writer.serialize(p)?;
            }
            let data = writer.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
            emit(|out| out.write_all(&data))?;
        }
    }
    Ok(())
}
