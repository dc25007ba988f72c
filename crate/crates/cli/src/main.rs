//! `convsurv` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or
//! validation error (including any failed model in `evaluate`), 3 internal
//! error. `--json-errors` writes `{"error": {...}}` to stderr instead of text.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use convsurv::{Error, ErrorCategory};

#[derive(Parser)]
#[command(name = "convsurv", version, about = "Predict when free-to-play players start paying")]
struct Cli {
    /// Report errors as JSON on stderr.
    #[arg(long, global = true)]
    json_errors: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic player logs and their ground truth.
    Generate(GenerateArgs),
    /// Validate a log file and write its engineered features.
    Ingest(IngestArgs),
    /// Fit one model on the training split of a log file.
    Train(TrainArgs),
    /// Predicted conversion times from a model file.
    Predict(PredictArgs),
    /// Compare models on a held-out split.
    Evaluate(EvaluateArgs),
    /// Population cumulative incidence of conversion with a confidence band.
    Curves(CurvesArgs),
}

#[derive(Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 20_000)]
    pub players: usize,
    /// Converter share among players with two or more active days.
    #[arg(long, default_value_t = 0.053)]
    pub pu_rate: f64,
    /// Observation window in days.
    #[arg(long, default_value_t = 90)]
    pub window: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; receives logs.csv and ground_truth.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct FeatureArgs {
    /// Inactive days before the end of data that count as churn. Required
    /// for rsf-cr, which learns churn as a competing event.
    #[arg(long)]
    pub churn_window: Option<u32>,
    /// Last day covered by the data (default: latest day in the logs).
    #[arg(long)]
    pub data_end: Option<i64>,
    /// Covariates handed to the models: `rates` or `all`.
    #[arg(long, default_value = "rates")]
    pub features: String,
}

#[derive(Args)]
pub struct IngestArgs {
    /// Player log CSV.
    pub input: PathBuf,
    #[command(flatten)]
    pub feature: FeatureArgs,
    /// Feature table CSV (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct ForestArgs {
    #[arg(long, default_value_t = 900)]
    pub trees: usize,
    /// Split significance level for the conditional ensemble.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Features tried per node (default: ceil(sqrt(p))).
    #[arg(long)]
    pub mtry: Option<usize>,
    #[arg(long, default_value_t = 15)]
    pub min_node_events: usize,
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Conditional-ensemble aggregation: `pooled` or `mean`.
    #[arg(long, default_value = "pooled")]
    pub aggregate: String,
    /// Ridge penalty on the Cox coefficients.
    #[arg(long, default_value_t = 1e-6)]
    pub ridge: f64,
    #[arg(long, default_value_t = 0.3)]
    pub train_frac: f64,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Player log CSV.
    pub input: PathBuf,
    /// cox, rsf, cif or rsf-cr.
    #[arg(long)]
    pub model: String,
    /// lifetime, level or playtime.
    #[arg(long, default_value = "lifetime")]
    pub target: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[command(flatten)]
    pub feature: FeatureArgs,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Training summary JSON (default: next to the model file).
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Args)]
pub struct PredictArgs {
    /// Player log CSV or feature table CSV (detected from the header).
    pub input: PathBuf,
    /// Model file written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Emit this player's full curve as `time,value` instead of the table.
    #[arg(long)]
    pub curve: Option<String>,
    /// Output CSV (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Player log CSV.
    pub input: PathBuf,
    /// Comma-separated model kinds or `all`.
    #[arg(long, default_value = "all")]
    pub models: String,
    /// Comma-separated axes or `all`.
    #[arg(long, default_value = "all")]
    pub targets: String,
    /// Seed for the split and the forests; required.
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[arg(long, default_value_t = convsurv::pipeline::DEFAULT_CHURN_WINDOW)]
    pub churn_window: u32,
    #[arg(long)]
    pub data_end: Option<i64>,
    #[arg(long, default_value = "rates")]
    pub features: String,
    /// Output directory for report.json, report.txt and scatter CSVs.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct CurvesArgs {
    /// Player log CSV.
    pub input: PathBuf,
    #[arg(long, default_value = "lifetime")]
    pub axis: String,
    /// `all` players or `converters` only.
    #[arg(long, default_value = "all")]
    pub population: String,
    /// Confidence level of the band.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Output CSV (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// What a command reports back to `main`.
pub enum Outcome {
    Done,
    /// Ran to the end but some part failed (exit 2).
    PartialFailure,
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Config => 1,
        ErrorCategory::Data => 2,
        ErrorCategory::Internal => 3,
    }
}

fn report(e: &Error, json: bool) {
    if json {
        let category = match e.category() {
            ErrorCategory::Config => "config",
            ErrorCategory::Data => "data",
            ErrorCategory::Internal => "internal",
        };
        let body = serde_json::json!({
            "error": { "category": category, "exit_code": exit_code(e), "message": e.to_string() }
        });
        eprintln!("{body}");
    } else {
        eprintln!("error: {e}");
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("CONVSURV_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("CONVSURV_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let json_errors = std::env::args().any(|a| a == "--json-errors");
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            if json_errors {
                report(&Error::Config(e.to_string().trim().to_string()), true);
            } else {
                let _ = e.print();
            }
            return ExitCode::from(1);
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Ingest(a) => commands::ingest(&a),
        Command::Train(a) => commands::train(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Curves(a) => commands::curves(&a),
    });
    match result {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::PartialFailure) => ExitCode::from(2),
        // A closed pipe (`| head`) is not worth reporting.
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            report(&e, cli.json_errors);
            ExitCode::from(exit_code(&e))
        }
    }
}
