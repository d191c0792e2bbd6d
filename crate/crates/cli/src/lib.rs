//! The `sea` command line: ingest → split → SFT datasets → standardize →
//! generate → mismatch training → self-correction → evaluation → report.

mod analysis;
mod config;
mod context;
mod data;
mod evaluation;
mod generation;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::ConfigFile;
pub use context::Settings;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_PIPELINE: i32 = 2;

/// Failure of a subcommand, split by who has to act on it.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or malformed inputs, incomplete configuration.
    Input(String),
    /// Model calls, training, or every item of a batch failed.
    Pipeline(String),
}

impl CliError {
    pub fn input(message: impl fmt::Display) -> Self {
        CliError::Input(message.to_string())
    }

    pub fn pipeline(message: impl fmt::Display) -> Self {
        CliError::Pipeline(message.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Pipeline(_) => EXIT_PIPELINE,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Pipeline(m) => write!(f, "pipeline error: {m}"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sea", version, about = "Automated paper reviewing pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Plain `key = value` configuration file.
    #[arg(long, global = true, env = "SEA_CONFIG")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true, env = "SEA_SEED")]
    pub seed: Option<u64>,
    /// Use the deterministic offline model backends.
    #[arg(long, global = true)]
    pub mock: bool,
    /// Maximum concurrent model requests.
    #[arg(long, global = true, env = "SEA_PARALLEL")]
    pub parallel: Option<usize>,
    /// Name of the chat endpoint in the config file.
    #[arg(long, global = true, env = "SEA_ENDPOINT")]
    pub endpoint: Option<String>,
    /// Output file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize a raw review dump into paper records.
    Ingest(data::IngestArgs),
    /// Rating-stratified train/test split.
    Split(data::SplitArgs),
    /// Build an instruction dataset.
    #[command(name = "build-sft")]
    BuildSft {
        #[command(subcommand)]
        kind: data::SftKind,
    },
    /// Consolidate each training paper's reviews into one standardized review.
    Standardize(generation::StandardizeArgs),
    /// Generate a review for each paper.
    Generate(generation::GenerateArgs),
    /// Fit the review/paper mismatch regressor.
    #[command(name = "train-mismatch")]
    TrainMismatch(analysis::TrainArgs),
    /// Acceptance threshold from the validation papers.
    Threshold(analysis::ThresholdArgs),
    /// Regenerate reviews until their predicted mismatch is small.
    #[command(name = "self-correct")]
    SelfCorrect(analysis::SelfCorrectArgs),
    /// Score generated reviews against the human reviews.
    Evaluate(evaluation::EvaluateArgs),
    /// Render evaluation rows as a table.
    Report(evaluation::ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subset {
    Train,
    Test,
    All,
}

/// Parses `argv` (including the program name), runs the subcommand, and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("sea: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let settings = Settings::resolve(&cli.global)?;
    match cli.command {
        Command::Ingest(args) => data::ingest(&settings, args),
        Command::Split(args) => data::split(&settings, args),
        Command::BuildSft { kind } => data::build_sft(&settings, kind),
        Command::Standardize(args) => generation::standardize(&settings, args),
        Command::Generate(args) => generation::generate(&settings, args),
        Command::TrainMismatch(args) => analysis::train(&settings, args),
        Command::Threshold(args) => analysis::threshold(&settings, args),
        Command::SelfCorrect(args) => analysis::self_correct(&settings, args),
        Command::Evaluate(args) => evaluation::evaluate(&settings, args),
        Command::Report(args) => evaluation::report(&settings, args),
    }
}
