//! `pstream`: synthetic data generation, benchmarks, shape detection and plan
//! inspection for the pstream engine.

mod bench;
mod data;
mod detect;
mod gen;
mod inspect;
mod queries;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pstream::alloc_counter::CountingAllocator;

#[global_allocator]
static ALLOC: CountingAllocator = CountingAllocator;

#[derive(Parser)]
#[command(
    name = "pstream",
    version,
    about = "Temporal stream engine: data generation, benchmarks, shape detection, plan inspection"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Seed for generated data.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Execution engine.
    #[arg(long, global = true, value_enum, default_value_t = EngineArg::Targeted)]
    pub engine: EngineArg,
    /// Window of normalize and the fills, and of the end-to-end pipeline.
    #[arg(long, global = true, default_value_t = 60_000)]
    pub window_ms: i64,
    /// Repetitions per benchmark.
    #[arg(long, global = true, default_value_t = 10)]
    pub trials: usize,
    /// Output path (file or, for two-stream generation, directory).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Independent shards run on separate threads.
    #[arg(long, global = true, default_value_t = 1)]
    pub parallel: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    Eager,
    Targeted,
    /// Run both and report the comparison.
    Both,
}

impl EngineArg {
    pub fn engines(self) -> Vec<pstream::Engine> {
        match self {
            EngineArg::Eager => vec![pstream::Engine::Eager],
            EngineArg::Targeted => vec![pstream::Engine::Targeted],
            EngineArg::Both => vec![pstream::Engine::Eager, pstream::Engine::Targeted],
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic datasets as CSV.
    Gen(gen::GenArgs),
    /// Time a toolkit operation or the end-to-end pipeline.
    Bench(bench::BenchArgs),
    /// Find template-shaped regions in a stream.
    Detect(detect::DetectArgs),
    /// Print the traced plan of a built-in query.
    Plan(inspect::PlanArgs),
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Engine(pstream::Error),
}

impl From<pstream::Error> for CliError {
    fn from(e: pstream::Error) -> Self {
        CliError::Engine(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Engine(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Engine(e) if e.is_internal() => 3,
            CliError::Engine(e) if e.is_data_error() => 2,
            CliError::Engine(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Engine(e) => write!(f, "{e}"),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

/// Output sink: the `--out` file, or stdout.
pub fn output(common: &Common) -> CliResult<Box<dyn Write>> {
    Ok(match &common.out {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let res = match &cli.command {
        Command::Gen(a) => gen::run(a, &cli.common),
        Command::Bench(a) => bench::run(a, &cli.common),
        Command::Detect(a) => detect::run(a, &cli.common),
        Command::Plan(a) => inspect::run(a, &cli.common),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
