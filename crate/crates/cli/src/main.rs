use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Joint embedding of instance-view and ontology-view knowledge graphs.
#[derive(Debug, Parser)]
#[command(name = "twoview", version)]
pub struct Cli {
    /// Run configuration (JSON). Every field has a default.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Overrides the split and training seeds.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Serial execution with a fixed batch order; identical inputs give
    /// identical outputs.
    #[arg(long, global = true)]
    pub deterministic: bool,

    /// Output directory (the split directory for `prepare`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split raw TSV files into a prepared directory and print its statistics.
    Prepare(PrepareArgs),
    /// Train the configured variant; writes checkpoints and history.csv.
    Train,
    /// Evaluate a checkpoint and write JSON reports.
    Eval(EvalArgs),
    /// Answer a single query with a trained checkpoint.
    Predict(PredictArgs),
    /// Write one embedding table as TSV.
    Export(ExportArgs),
    /// Gradient, norm and correlation diagnostics.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Use the generated synthetic KB instead of the configured raw files.
    #[arg(long)]
    pub synthetic: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Tasks to run; defaults to `eval.tasks` of the configuration.
    #[arg(long = "task", value_enum)]
    pub tasks: Vec<Task>,

    /// Defaults to `<out>/checkpoint.ckpt`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,

    /// Also write `ranks-<task>.tsv` next to each report.
    #[arg(long)]
    pub dump_ranks: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Triples,
    Typing,
    Longtail,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(subcommand)]
    pub query: Query,

    /// Defaults to `<out>/checkpoint.ckpt`.
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,

    /// Number of answers.
    #[arg(short, long, default_value_t = 10, global = true)]
    pub k: usize,

    /// Print a JSON array instead of TSV lines.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum Query {
    /// Concepts closest to an entity's image.
    Type { entity: String },
    /// Best tails of `(head, relation, ?)` in the instance view.
    Tail { head: String, relation: String },
    /// Best tails of `(concept, meta_relation, ?)`, known triples excluded.
    Meta {
        concept: String,
        meta_relation: String,
    },
    /// Instance relations linking two concepts (translational CT variants).
    Relquery { head: String, tail: String },
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(value_enum)]
    pub what: Table,

    /// Defaults to `<out>/checkpoint.ckpt`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,

    /// Defaults to `<out>/<what>.tsv`.
    #[arg(long)]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Table {
    Entities,
    Concepts,
    Relations,
    Meta,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Audit this checkpoint instead of a fresh initialization.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,

    #[arg(long, default_value_t = 8)]
    pub dim: usize,

    #[arg(long, default_value_t = 100)]
    pub probes: usize,

    #[arg(long, default_value_t = 100)]
    pub audit_steps: usize,

    /// Scale the analytic gradient of the named check, e.g. `gradient/ct`.
    #[arg(long, hide = true, value_name = "CHECK")]
    pub inject_fault: Option<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
