//! `dti`: reproducible experiments for directional embedding inversion.
//!
//! Every subcommand writes its numeric results to the files it is given and
//! prints one JSON line `{"command", "artifacts", "elapsed_ms"}` on success.
//! Exit codes: 1 usage, 2 file format, 3 numeric precondition.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, CommandFactory, Parser, Subcommand};
use dti_core::geometry::Metric;
use dti_core::inversion::OptimizerKind;
use dti_core::prenorm::NormKind;
use dti_core::{DtiError, ErrorClass};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "dti",
    version,
    about = "Directional embedding inversion experiments"
)]
#[command(after_help = "List flags take comma-separated values, e.g. --magnitudes 1,2,4,8.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a concept embedding against a built-in loss oracle
    Invert(InvertArgs),
    /// Rescale every row of a table to a fixed norm
    Rescale(RescaleArgs),
    /// Nearest tokens to a query under cosine or Euclidean distance
    Knn(KnnArgs),
    /// Row-norm statistics and histogram of a table
    Norms(NormsArgs),
    /// How much a positional term still moves Norm(m·v + p) as m grows
    Attenuate(AttenuateArgs),
    /// Per-block angles and accumulated drift bounds of a random pre-norm stack
    Drift(DriftArgs),
    /// Directional freezing of a stack's output as the input is scaled by alpha
    Freeze(FreezeArgs),
    /// Frozen position probe swept over token magnitudes
    Probe(ProbeArgs),
    /// Spherical interpolation between two learned concepts
    Slerp(SlerpArgs),
    /// Finite-difference check of a built-in oracle's gradient
    AuditOracle(AuditArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Invert(_) => "invert",
            Command::Rescale(_) => "rescale",
            Command::Knn(_) => "knn",
            Command::Norms(_) => "norms",
            Command::Attenuate(_) => "attenuate",
            Command::Drift(_) => "drift",
            Command::Freeze(_) => "freeze",
            Command::Probe(_) => "probe",
            Command::Slerp(_) => "slerp",
            Command::AuditOracle(_) => "audit-oracle",
        }
    }
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum OracleKind {
    Quadratic,
    Cosine,
    Toy,
}

#[derive(Args)]
struct InvertArgs {
    /// InversionConfig JSON
    #[arg(long)]
    config: PathBuf,
    /// Vocabulary table; needed for token lookups and MeanVocabNorm
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "quadratic")]
    oracle: OracleKind,
    /// Initialization token from --embeddings
    #[arg(long, conflicts_with = "init")]
    init_token: Option<String>,
    /// Initialization as a one-row table
    #[arg(long)]
    init: Option<PathBuf>,
    /// Token whose direction the oracle targets
    #[arg(long, conflicts_with = "target")]
    target_token: Option<String>,
    /// Target as a one-row table
    #[arg(long)]
    target: Option<PathBuf>,
    /// Overrides the optimizer in the config (rsgd|adam)
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    /// Learned concept, written as a one-row table
    #[arg(long)]
    out: PathBuf,
    /// Full result with trajectory, as JSON
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Token name for the learned concept
    #[arg(long, default_value = "<concept>")]
    token: String,
    /// Stack depth for the toy oracle
    #[arg(long, default_value_t = 2)]
    depth: usize,
    /// Norm kind for the toy oracle (ln|rms)
    #[arg(long, default_value = "ln")]
    norm: NormKind,
    /// Context offset norm for the toy oracle
    #[arg(long, default_value_t = 2.0)]
    context_norm: f64,
}

#[derive(Args)]
struct RescaleArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Target norm; defaults to the mean row norm of --embeddings
    #[arg(long, required_unless_present = "embeddings")]
    m_star: Option<f64>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct KnnArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    query: String,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// cosine|euclidean
    #[arg(long, default_value = "cosine")]
    metric: Metric,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct NormsArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AttenuateArgs {
    #[arg(long, default_value_t = 768)]
    dim: usize,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "1,2,4,8,16,32,64,128,256,512,1024"
    )]
    magnitudes: Vec<f64>,
    /// ln|rms
    #[arg(long, default_value = "ln")]
    norm: NormKind,
    /// Norm of the random positional term
    #[arg(long, default_value_t = 1.0)]
    p_norm: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// CSV with header m,delta
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StackArgs {
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 12)]
    depth: usize,
    /// ln|rms
    #[arg(long, default_value = "ln")]
    norm: NormKind,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct DriftArgs {
    #[command(flatten)]
    stack: StackArgs,
    #[arg(long, default_value_t = 10.0)]
    x0_norm: f64,
    /// DriftReport JSON
    #[arg(long)]
    out: PathBuf,
    /// Also write a Monte-Carlo estimate of each block's sup update norm
    #[arg(long)]
    sup_out: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    sup_samples: usize,
}

#[derive(Args)]
struct FreezeArgs {
    #[command(flatten)]
    stack: StackArgs,
    #[arg(long, default_value_t = 150.0)]
    x0_norm: f64,
    #[arg(long, value_delimiter = ',', default_value = "1.5,2,4,8,16,32")]
    alphas: Vec<f64>,
    /// CSV with header alpha,angle,bound
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProbeArgs {
    /// Vocabulary table; a synthetic 768-wide one is generated when absent
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2,4,8,16")]
    magnitudes: Vec<f64>,
    #[arg(long, default_value_t = 8)]
    seq_len: usize,
    /// ln|rms
    #[arg(long, default_value = "ln")]
    norm: NormKind,
    /// Tokens sampled per dataset
    #[arg(long, default_value_t = 100)]
    tokens: usize,
    #[arg(long, default_value_t = 128)]
    hidden: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    /// One probe is trained per seed; accuracies are averaged
    #[arg(long, value_delimiter = ',', default_value = "42")]
    seeds: Vec<u64>,
    /// CSV with header m,accuracy
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON with per-seed accuracies
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SlerpArgs {
    /// One-row table
    #[arg(long)]
    a: PathBuf,
    /// One-row table
    #[arg(long)]
    b: PathBuf,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.0,0.35,0.40,0.45,0.50,0.55,0.60,0.65,1.0"
    )]
    ratios: Vec<f64>,
    /// Output magnitude; defaults to the mean of the two input norms
    #[arg(long)]
    m_star: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long, value_enum, default_value = "quadratic")]
    oracle: OracleKind,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    /// Random evaluation points
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Largest accepted relative error
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'a str,
    artifacts: Vec<String>,
    elapsed_ms: u128,
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Usage => 1,
        ErrorClass::Format => 2,
        ErrorClass::Numeric => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let name = cli.command.name();
    let start = Instant::now();
    match commands::run(cli.command) {
        Ok(artifacts) => {
            let summary = Summary {
                command: name,
                artifacts: artifacts.iter().map(|p| p.display().to_string()).collect(),
                elapsed_ms: start.elapsed().as_millis(),
            };
            println!(
                "{}",
                serde_json::to_string(&summary).expect("summary serializes")
            );
            ExitCode::SUCCESS
        }
        Err(err) => report(name, &err),
    }
}

fn report(name: &str, err: &DtiError) -> ExitCode {
    eprintln!("error: {err}");
    let class = err.class();
    if class == ErrorClass::Usage {
        let mut cli = Cli::command();
        cli.build();
        if let Some(sub) = cli.find_subcommand_mut(name) {
            eprintln!("\n{}", sub.render_help());
        }
    }
    ExitCode::from(exit_code(class))
}
