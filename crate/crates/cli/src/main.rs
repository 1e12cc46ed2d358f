mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::Config;

#[derive(Parser)]
#[command(name = "cointoss", version, about = "Multifractal analysis of inhomogeneous Bernoulli products")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// JSON or TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads: a count or `auto`.
    #[arg(long, global = true, default_value = "auto")]
    threads: String,
    /// Tabular output format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Cylinder-level queries.
    Measure {
        #[command(subcommand)]
        op: MeasureOp,
    },
    /// Running-sup L^q spectrum on a q-grid.
    Spectrum,
    /// Grid Legendre transform of the spectrum.
    Legendre,
    /// Gibbs-tilted weight sequence.
    Gibbs,
    /// Entropy dimensions over the window.
    Dims,
    /// Computable level-set dimension bounds at one q.
    Bounds,
    /// Exact coarse singularity spectrum.
    Coarse,
    /// Monte Carlo local dimensions.
    Sample,
    /// Two-transition perturbation of a convex combination.
    FitTransition,
    /// Diagonal construction with several stages.
    Dense,
    /// Slope discontinuities of a spectrum.
    Kinks,
    /// Seeded invariant suite.
    Verify,
    /// SVG line plot of CSV columns.
    Plot(PlotArgs),
}

#[derive(Subcommand)]
enum MeasureOp {
    /// log2 mass of a cylinder.
    Eval {
        /// Bit word, e.g. 0110; overrides `eval.cylinder`.
        #[arg(long)]
        cylinder: Option<String>,
    },
}

#[derive(Args)]
pub struct PlotArgs {
    /// CSV files to overlay.
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    /// Column for the horizontal axis; the first column when absent.
    #[arg(long)]
    x: Option<String>,
    /// Columns to draw; every other numeric column when absent.
    #[arg(long)]
    y: Vec<String>,
    /// File name inside the output directory.
    #[arg(long, default_value = "plot.svg")]
    name: String,
    #[arg(long)]
    title: Option<String>,
}

#[derive(Debug)]
pub enum CliError {
    Validation { kind: String, message: String },
    Construction { kind: String, message: String },
    Failed { kind: String, message: String },
}

impl CliError {
    pub fn validation(kind: &str, message: String) -> Self {
        CliError::Validation { kind: kind.into(), message }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation { .. } => 1,
            CliError::Construction { .. } => 2,
            CliError::Failed { .. } => 3,
        }
    }
}

impl From<cointoss::Error> for CliError {
    fn from(e: cointoss::Error) -> Self {
        let (kind, message) = (e.kind().to_string(), e.to_string());
        if e.is_construction_failure() {
            CliError::Construction { kind, message }
        } else {
            CliError::Validation { kind, message }
        }
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: &'a str,
    exit_code: u8,
}

fn configure_threads(spec: &str) -> Result<(), CliError> {
    let n = match spec {
        "auto" => 0,
        s => s
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::validation("argument", format!("--threads expects a positive count or `auto`, got `{s}`")))?,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::validation("threads", e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads(&cli.common.threads)?;
    if let Command::Plot(args) = &cli.command {
        return plot::run(args, &cli.common.out);
    }
    let mut cfg = match &cli.common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.common.seed {
        cfg.seed = s;
    }
    if let Command::Measure { op: MeasureOp::Eval { cylinder: Some(c) } } = &cli.command {
        cfg.eval.cylinder = Some(c.clone());
    }
    let name = match &cli.command {
        Command::Measure { .. } => "measure-eval",
        Command::Spectrum => "spectrum",
        Command::Legendre => "legendre",
        Command::Gibbs => "gibbs",
        Command::Dims => "dims",
        Command::Bounds => "bounds",
        Command::Coarse => "coarse",
        Command::Sample => "sample",
        Command::FitTransition => "fit-transition",
        Command::Dense => "dense",
        Command::Kinks => "kinks",
        Command::Verify => "verify",
        Command::Plot(_) => unreachable!("handled above"),
    };
    cfg.resolve(name)?;
    let out = commands::Output::new(&cli.common.out, cli.common.format)?;
    out.json("manifest.json", &cfg)?;
    commands::dispatch(name, &cfg, &out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (CliError::Validation { kind, message }
            | CliError::Construction { kind, message }
            | CliError::Failed { kind, message }) = &e;
            let report = ErrorReport { error: kind, message, exit_code: e.exit_code() };
            eprintln!("{}", serde_json::to_string(&report).expect("error report serializes"));
            ExitCode::from(e.exit_code())
        }
    }
}
