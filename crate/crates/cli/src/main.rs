//! `bhplus`: FDR control for discrete two-sample count tests.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use bhplus_core::{Error, TestKind};

#[derive(Debug, Parser)]
#[command(
    name = "bhplus",
    version,
    about = "BH, BH+ and mid-p BH+ for Binomial and Fisher exact tests"
)]
struct Cli {
    /// Worker threads for record and replication fan-out.
    #[arg(long, global = true, env = "BHPLUS_WORKERS", value_parser = clap::value_parser!(u16).range(1..))]
    workers: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Test every record and report BH, BH+ and MidPBH+ rejections.
    Analyze(AnalyzeArgs),
    /// Estimate FDR and power by simulation.
    Simulate(SimulateArgs),
    /// Dump each record's p-value null support and the pointwise-max CDF.
    Support(SupportArgs),
    /// Compare rejection counts of conventional and mid p-values.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TestArg {
    Bt,
    Fet,
}

impl From<TestArg> for TestKind {
    fn from(t: TestArg) -> Self {
        match t {
            TestArg::Bt => TestKind::Bt,
            TestArg::Fet => TestKind::Fet,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PValueArg {
    Conventional,
    Mid,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FlavorArg {
    Conventional,
    Mid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FilterArg {
    Methylation,
    Hiv,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DependenceArg {
    Indep,
    Block,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CopulaArg {
    Shared,
    PerGroup,
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Count table with header `id,c1,c2[,n1,n2]`; `.tsv`/`.tab` files are tab separated.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    test: TestArg,
    /// Record filter applied before testing.
    #[arg(long, value_enum, default_value = "none")]
    filter: FilterArg,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Output file; standard output when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_parser = parse_alpha)]
    alpha: f64,
    /// Which p-value flavors to run: conventional gives BH and BH+, mid gives MidPBH+.
    #[arg(long, value_enum, default_value = "both")]
    pvalue: PValueArg,
    /// `csv` writes per-hypothesis rows, `json` the summary.
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
    #[command(flatten)]
    output: OutputArgs,
    /// Also write the JSON summary to this file.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    test: TestArg,
    /// Run every (pi0, alpha, eta or n) cell of the reference grid.
    #[arg(long, conflicts_with_all = ["pi0", "alpha", "eta", "n"])]
    grid: bool,
    #[arg(long, required_unless_present = "grid", value_parser = parse_pi0)]
    pi0: Option<f64>,
    #[arg(long, required_unless_present = "grid", value_parser = parse_alpha)]
    alpha: Option<f64>,
    /// Pareto location of the Poisson means (bt).
    #[arg(long, value_parser = parse_positive)]
    eta: Option<f64>,
    /// Trials per group (fet).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: Option<u64>,
    #[arg(long, value_enum, default_value = "indep")]
    dependence: DependenceArg,
    /// Whether both groups of a test share one copula uniform.
    #[arg(long, value_enum, default_value = "shared")]
    copula: CopulaArg,
    /// Number of hypotheses per replication.
    #[arg(long, default_value_t = 200, value_parser = parse_positive_usize)]
    m: usize,
    #[arg(long, default_value_t = 300, value_parser = parse_positive_usize)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct SupportArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value = "conventional")]
    pvalue: FlavorArg,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_parser = parse_alpha)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "json")]
    format: OutputFormat,
    #[command(flatten)]
    output: OutputArgs,
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.parse::<f64>().map_err(|e| format!("{s:?}: {e}"))
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is outside (0, 1)"))
    }
}

fn parse_pi0(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

fn parse_positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(format!("{s:?}: {e}")),
    }
}

/// Failure classes, each with its own exit code and diagnostic prefix.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    fn line(&self) -> String {
        let (tag, msg) = match self {
            Failure::Usage(m) => ("usage", m),
            Failure::Data(m) => ("data", m),
            Failure::Internal(m) => ("internal", m),
        };
        // Keep diagnostics on one line.
        let msg = msg.split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error[{tag}]: {msg}")
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Invariant(_) => Failure::Internal(e.to_string()),
            e if e.is_data_error() => Failure::Data(e.to_string()),
            Error::InvalidAlpha(_) | Error::InvalidConfig(_) | Error::InvalidParameter(_) => {
                Failure::Usage(e.to_string())
            }
            e => Failure::Internal(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let msg = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("{}", Failure::Usage(msg.to_string()).line());
            return ExitCode::from(1);
        }
    };

    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n.into())
            .build_global()
        {
            eprintln!("{}", Failure::Internal(format!("worker pool: {e}")).line());
            return ExitCode::from(3);
        }
    }

    let outcome = match cli.command {
        Command::Analyze(a) => commands::analyze(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Support(a) => commands::support(a),
        Command::Compare(a) => commands::compare(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.line());
            ExitCode::from(f.code())
        }
    }
}
