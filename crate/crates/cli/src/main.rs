//! `stpca`: dataset generation, feature selection, grid searches and reports.

mod commands;
mod config;
mod error;
mod pgm;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stpca::eval::grid::Method;
use stpca::synth::ErrorPattern;
use stpca::tensor::TransformKind;

use commands::{GenerateFlags, GenerateKind, ReportFormat};
use config::{EvaluateConfig, GenerateConfig, GridConfig, GridPreset, SelectConfig};
use error::{invalid, CliResult};

#[derive(Parser)]
#[command(name = "stpca", version, about = "Sparse tensor PCA feature selection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (DTF tensor plus JSON sidecar).
    Generate(GenerateArgs),
    /// Fit one method at one (lambda, eta) and write scores.csv, selection.json and scoremap.pgm.
    Select(SelectArgs),
    /// Run a (lambda, eta) grid and write a JSON metrics report.
    Grid(GridArgs),
    /// Score a selection file: POC/POTC against the ground truth and k-means ACC/NMI.
    Evaluate(EvaluateArgs),
    /// Summarize grid reports as a table.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Orbit,
    Array,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(value_enum)]
    kind: Kind,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Orbit dimension (3, 4 or 5).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    series_len: Option<usize>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Keep raw orbit amplitudes.
    #[arg(long)]
    no_normalize: bool,
    /// Array case (1 or 2).
    #[arg(long)]
    case: Option<u8>,
    /// Faulty-unit pattern for case 2: random, horizontal, vertical, rectangular.
    #[arg(long)]
    pattern: Option<ErrorPattern>,
    #[arg(long)]
    units: Option<usize>,
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long, conflicts_with = "snr_db")]
    noiseless: bool,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Transform for the mp methods.
    #[arg(long, value_enum)]
    transform: Option<TransformArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransformArg {
    Identity,
    Dft,
}

impl From<TransformArg> for TransformKind {
    fn from(t: TransformArg) -> Self {
        match t {
            TransformArg::Identity => TransformKind::Identity,
            TransformArg::Dft => TransformKind::Dft,
        }
    }
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// dp-1sd, dp-2sd, dp-md, mp-dir1 or mp-dir2.
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    h: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct ProtocolArgs {
    /// k-means repetitions per selection.
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Skip clustering.
    #[arg(long)]
    no_cluster: bool,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long, value_enum)]
    preset: Option<GridPreset>,
    /// Comma-separated values; replaces the preset.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    lambdas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    etas: Option<Vec<f64>>,
    #[arg(long)]
    h: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    protocol: ProtocolArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// JSON object with a `features` array of 0-based indices.
    #[arg(long)]
    selection: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    protocol: ProtocolArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Grid report files.
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: ReportFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_solver(opts: &mut stpca::dp::SolverOptions, transform: &mut TransformKind, s: SolverArgs) {
    set(&mut opts.max_iter, s.max_iter);
    set(&mut opts.tol, s.tol);
    set(transform, s.transform.map(Into::into));
}

fn apply_protocol(p: &mut stpca::eval::grid::ClusterProtocol, a: ProtocolArgs) {
    set(&mut p.repetitions, a.repetitions);
    set(&mut p.restarts, a.restarts);
    if a.no_cluster {
        p.enabled = false;
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("STPCA_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| invalid(format!("STPCA_THREADS={:?} is not a positive integer", v)))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| invalid(e.to_string()))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::Generate(a) => {
            let cfg: GenerateConfig = config::load(a.config.as_deref())?;
            let kind = match a.kind {
                Kind::Orbit => GenerateKind::Orbit,
                Kind::Array => GenerateKind::Array,
            };
            let flags = GenerateFlags {
                out: a.out,
                seed: a.seed,
                n: a.n,
                samples: a.samples,
                series_len: a.series_len,
                noise_sigma: a.noise_sigma,
                no_normalize: a.no_normalize,
                case: a.case,
                pattern: a.pattern,
                units: a.units,
                snr_db: a.snr_db,
                noiseless: a.noiseless,
            };
            commands::generate(kind, cfg, flags)
        }
        Command::Select(a) => {
            let mut cfg: SelectConfig = config::load(a.config.as_deref())?;
            set(&mut cfg.data, a.data.map(Some));
            set(&mut cfg.method, a.method.map(Some));
            set(&mut cfg.lambda, a.lambda);
            set(&mut cfg.eta, a.eta);
            set(&mut cfg.h, a.h.map(Some));
            set(&mut cfg.seed, a.seed);
            set(&mut cfg.out_dir, a.out_dir.map(Some));
            apply_solver(&mut cfg.options, &mut cfg.transform, a.solver);
            commands::select(cfg)
        }
        Command::Grid(a) => {
            let mut cfg: GridConfig = config::load(a.config.as_deref())?;
            set(&mut cfg.data, a.data.map(Some));
            set(&mut cfg.method, a.method.map(Some));
            set(&mut cfg.preset, a.preset);
            set(&mut cfg.lambda_grid, a.lambdas.map(Some));
            set(&mut cfg.eta_grid, a.etas.map(Some));
            set(&mut cfg.h, a.h.map(Some));
            set(&mut cfg.seed, a.seed);
            set(&mut cfg.out, a.out.map(Some));
            apply_solver(&mut cfg.options, &mut cfg.transform, a.solver);
            apply_protocol(&mut cfg.protocol, a.protocol);
            commands::grid(cfg)
        }
        Command::Evaluate(a) => {
            let mut cfg: EvaluateConfig = config::load(a.config.as_deref())?;
            set(&mut cfg.data, a.data.map(Some));
            set(&mut cfg.selection, a.selection.map(Some));
            set(&mut cfg.out, a.out.map(Some));
            apply_protocol(&mut cfg.protocol, a.protocol);
            commands::evaluate(cfg)
        }
        Command::Report(a) => commands::report(&a.inputs, a.format, a.out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stpca: {}", e);
            ExitCode::from(e.exit_code())
        }
    }
}
