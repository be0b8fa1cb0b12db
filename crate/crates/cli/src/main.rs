//! `dht`: acceptance-sampling plans, level ladders, stream inspection,
//! run limits, solver selection, OC curves and simulation.

mod commands;
mod output;
mod tokens;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dht_core::{Method, ZMode};

use output::{Emitter, Format};

/// Exit status contract.
pub mod exit {
    pub const OK: u8 = 0;
    pub const USAGE: u8 = 1;
    pub const COMPUTE: u8 = 2;
    pub const REJECTED: u8 = 3;
    pub const INCONCLUSIVE: u8 = 4;
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or unparsable input.
    Usage(String),
    /// A solver or computation failed on valid input.
    Compute(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Compute(_) => exit::COMPUTE,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Compute(format!("i/o error: {e}"))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dht",
    version,
    about = "Double-hypothesis-test acceptance sampling"
)]
pub struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value = "kv", global = true)]
    pub format: Format,
    /// Write records here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// `paper` uses 1.64 for a 5% tail; `exact` uses the normal quantile.
    #[arg(long, value_enum, default_value = "paper", global = true)]
    pub z_mode: ZModeArg,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ZModeArg {
    Paper,
    Exact,
}

impl From<ZModeArg> for ZMode {
    fn from(z: ZModeArg) -> Self {
        match z {
            ZModeArg::Paper => ZMode::Paper,
            ZModeArg::Exact => ZMode::Exact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    /// Exact binomial for the first pair, iterative normal after.
    BinThenNormI,
    Bin,
    Poiss,
    NormN,
    NormI,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct TailArgs {
    /// Producer risk.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Consumer risk.
    #[arg(long, default_value_t = 0.05)]
    pub beta: f64,
    /// Convergence tolerance; defaults per method.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Largest sample size a scan may reach.
    #[arg(long)]
    pub max_n: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub p0: f64,
    #[arg(long)]
    pub p1: f64,
    /// bin, poiss, norm-n or norm-i.
    #[arg(long, value_parser = parse_method, default_value = "norm-n")]
    pub method: Method,
    #[command(flatten)]
    pub tails: TailArgs,
}

/// A plan given directly by `--n/--c` or solved from `--p0/--p1`.
#[derive(Debug, Args)]
pub struct PlanSource {
    #[arg(long, requires = "c", conflicts_with_all = ["p0", "p1"])]
    pub n: Option<u64>,
    #[arg(long, requires = "n")]
    pub c: Option<u64>,
    #[arg(long, requires = "p1")]
    pub p0: Option<f64>,
    #[arg(long, requires = "p0")]
    pub p1: Option<f64>,
    #[arg(long, value_parser = parse_method, default_value = "norm-n")]
    pub method: Method,
    #[command(flatten)]
    pub tails: TailArgs,
}

#[derive(Debug, Args)]
pub struct LadderArgs {
    /// Explicit levels, comma separated and increasing.
    #[arg(long, value_delimiter = ',', conflicts_with = "step")]
    pub levels: Option<Vec<f64>>,
    /// Level spacing for a ladder starting at 0.
    #[arg(long)]
    pub step: Option<f64>,
    /// Number of pairs when using `--step`.
    #[arg(long, default_value_t = 8)]
    pub rows: usize,
    #[arg(long, value_enum, default_value = "bin-then-norm-i")]
    pub schedule: ScheduleArg,
    /// Recurrence horizon for the run limits.
    #[arg(long, default_value_t = 1e6)]
    pub ex: f64,
    #[command(flatten)]
    pub tails: TailArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EventFilter {
    All,
    Transitions,
    None,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one sampling plan.
    Plan(PlanArgs),
    /// Plans and run limits for a stepped level ladder.
    Table(LadderArgs),
    /// Run a 0/1 outcome stream through a level ladder.
    Inspect {
        #[command(flatten)]
        ladder: LadderArgs,
        /// Outcome file; stdin when absent or `-`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Which per-trial events to print before the verdict.
        #[arg(long, value_enum, default_value = "all")]
        events: EventFilter,
    },
    /// Successive-failure limit for a defect rate.
    Sfl {
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 1e6)]
        ex: f64,
    },
    /// Recommend a solver with the fuzzy rule base.
    Select {
        #[arg(long)]
        step: f64,
        #[arg(long)]
        th: f64,
        #[arg(long)]
        texec: f64,
        #[arg(long)]
        prec: f64,
        /// Rule base in TOML; the built-in one when absent.
        #[arg(long)]
        fuzzy_config: Option<PathBuf>,
    },
    /// Operating characteristic over a grid of defect rates.
    Oc {
        #[command(flatten)]
        plan: PlanSource,
        /// `start:stop:step`, both ends included.
        #[arg(long, default_value = "0:1:0.01")]
        grid: String,
    },
    /// Monte Carlo acceptance rates against the exact OC.
    Simulate {
        #[command(flatten)]
        plan: PlanSource,
        /// Defect rates to simulate, comma separated.
        #[arg(long = "p", value_delimiter = ',', conflicts_with = "grid")]
        rates: Option<Vec<f64>>,
        /// `start:stop:step`, both ends included.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = 100_000)]
        reps: u64,
        #[arg(long, env = "DHT_SEED", default_value_t = 1)]
        seed: u64,
    },
}

fn open_output(path: Option<&PathBuf>) -> Result<Box<dyn Write>, CliError> {
    match path {
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
        Some(p) => File::create(p)
            .map(|f| Box::new(BufWriter::new(f)) as Box<dyn Write>)
            .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", p.display()))),
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let mut out = Emitter::new(cli.format, open_output(cli.output.as_ref())?);
    let z = ZMode::from(cli.z_mode);
    let code = commands::dispatch(cli.command, z, &mut out);
    out.flush()?;
    code
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                exit::USAGE
            } else {
                exit::OK
            });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprintln!("error: {m}"),
                CliError::Compute(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(e.code())
        }
    }
}
