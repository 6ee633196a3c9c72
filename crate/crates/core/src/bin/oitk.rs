use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use oitk::cli::{configure_threads, execute, exit_code, Command, GridOverride, Input, JobConfig};
use oitk::compat::MetricKind;
use oitk::OitError;

/// Optimal information transport on the flat torus.
///
/// Inputs are grayscale PNG/PGM images (white = dense), raw f64 grids with a
/// JSON sidecar, or builtins: builtin:uniform, builtin:cosine, builtin:J,
/// builtin:V. The JSON report goes to stdout. OITK_THREADS caps the number
/// of worker threads.
#[derive(Parser)]
#[command(name = "oitk", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Exact matching from the volume form, or symmetric matching with --source
    MatchExact(Opts),
    /// Inexact compatible matching from the volume form
    MatchInexact(Opts),
    /// Gradient-flow registration of --source onto --target
    Register(Opts),
    /// Frames of the lifted geodesic from --source to --target
    Morph(Opts),
    /// Samples of --target (or of the map in --warp) as CSV
    Sample(Opts),
    /// Distances between --source and --target
    Distances(Opts),
    /// Lift of the geodesic from --source (default uniform) to --target up to --t-end
    Lift(Opts),
}

#[derive(Args)]
struct Opts {
    #[arg(long)]
    source: Option<Input>,
    #[arg(long)]
    target: Option<Input>,
    /// Output directory; nothing is written without it
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Lift steps N
    #[arg(long, short = 'N')]
    steps: Option<usize>,
    /// Lift step 1/N, or the flow step size for register
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 400)]
    max_iter: usize,
    /// Relative energy change that stops register; 0 runs all iterations
    #[arg(long, default_value_t = 0.0)]
    rel_tol: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Background added to [0, 1] images (default 0.2 for letters, else 0)
    #[arg(long)]
    floor: Option<f64>,
    /// conformal or flat
    #[arg(long, default_value = "conformal")]
    metric: MetricKind,
    /// Strang splitting for the tracked Jacobian
    #[arg(long)]
    strang: bool,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    lx: Option<f64>,
    #[arg(long)]
    ly: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write a frame every this many steps (0: none)
    #[arg(long, default_value_t = 0)]
    checkpoint: usize,
    /// Number of samples
    #[arg(long, short = 'n', default_value_t = 100_000)]
    samples: usize,
    /// Bins per axis of the goodness-of-fit check
    #[arg(long, default_value_t = 16)]
    bins: usize,
    #[arg(long, default_value_t = 1.0)]
    t_end: f64,
    /// Cached transport map for sample
    #[arg(long)]
    warp: Option<PathBuf>,
}

impl Cmd {
    fn into_config(self) -> JobConfig {
        let (command, o) = match self {
            Cmd::MatchExact(o) => (Command::MatchExact, o),
            Cmd::MatchInexact(o) => (Command::MatchInexact, o),
            Cmd::Register(o) => (Command::Register, o),
            Cmd::Morph(o) => (Command::Morph, o),
            Cmd::Sample(o) => (Command::Sample, o),
            Cmd::Distances(o) => (Command::Distances, o),
            Cmd::Lift(o) => (Command::Lift, o),
        };
        JobConfig {
            command,
            source: o.source,
            target: o.target,
            grid: GridOverride {
                nx: o.nx,
                ny: o.ny,
                lx: o.lx,
                ly: o.ly,
            },
            steps: o.steps,
            eps: o.eps,
            sigma: o.sigma,
            max_iter: o.max_iter,
            rel_tol: o.rel_tol,
            lambda: o.lambda,
            background_floor: o.floor,
            metric_kind: o.metric,
            strang: o.strang,
            out_dir: o.out,
            seed: o.seed,
            checkpoint_stride: o.checkpoint,
            samples: o.samples,
            bins: o.bins,
            t_end: o.t_end,
            warp: o.warp,
        }
    }
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    configure_threads(std::env::var("OITK_THREADS").ok().as_deref())?;
    let cfg = cli.command.into_config();
    let report = execute(&cfg).with_context(|| format!("{} failed", cfg.command))?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<OitError>().map_or(1, exit_code);
            ExitCode::from(code as u8)
        }
    }
}
