use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use deeptv::{Boundary, Smoothing, TvVariant};
use deeptv_cli::{emit_plots, run_task, Overrides, Preset, RunConfig, Task};

/// Total-variation reconstruction with bounded-weight ReLU networks.
#[derive(Parser)]
#[command(name = "deeptv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Remove Gaussian and salt-and-pepper noise from an image
    Denoise(RunArgs),
    /// Fill a masked region of an image
    Inpaint(RunArgs),
    /// Undo a Gaussian (or file-given) blur
    Deblur(RunArgs),
    /// Energy of the 1D step reconstruction over a ladder of weight bounds
    Sweep1d(RunArgs),
    /// Energy of the 2D disk reconstruction over a ladder of (grid, bound) pairs
    Sweep2d(RunArgs),
    /// Trained network against the pixel-space minimizer on the 1D step
    FdBaseline(RunArgs),
    /// A-posteriori error bound along the training updates on the 1D step
    ErrorTrack(RunArgs),
    /// Extract plot series from a finished run directory
    Plots { dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Ci,
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum TvArg {
    Tv2,
    Tv21,
}

#[derive(Clone, Copy, ValueEnum)]
enum SmoothingArg {
    None,
    Huber,
    Lift,
    Maxlift,
}

#[derive(Clone, Copy, ValueEnum)]
enum BcArg {
    Neumann,
    Dirichlet,
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON document overriding the preset
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "ci")]
    preset: PresetArg,
    /// Print the resolved configuration and exit
    #[arg(long)]
    dry_run: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    alpha1: Option<f64>,
    #[arg(long)]
    alpha2: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum)]
    tv: Option<TvArg>,
    #[arg(long, value_enum)]
    smoothing: Option<SmoothingArg>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Bound on the largest absolute network weight
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    /// Hidden layer widths, e.g. 128,128,128
    #[arg(long, value_delimiter = ',')]
    arch: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    bc: Option<BcArg>,
    /// Input image (PNG or PGM); a synthetic disk otherwise
    #[arg(long)]
    input: Option<PathBuf>,
    /// Nodes per axis of synthetic data
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    sp_prob: Option<f64>,
    /// Mask image, nonzero pixels are kept
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Blur kernel as a plain-text square matrix
    #[arg(long)]
    kernel: Option<PathBuf>,
    #[arg(long)]
    blur_size: Option<usize>,
    #[arg(long)]
    blur_sigma: Option<f64>,
    #[arg(long)]
    fine_factor: Option<usize>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            lambda: self.lambda,
            tv: self.tv.map(|t| match t {
                TvArg::Tv2 => TvVariant::Tv2,
                TvArg::Tv21 => TvVariant::Tv21,
            }),
            smoothing: self.smoothing.map(|s| match s {
                SmoothingArg::None => Smoothing::None,
                SmoothingArg::Huber => Smoothing::Huber,
                SmoothingArg::Lift => Smoothing::Lift,
                SmoothingArg::Maxlift => Smoothing::MaxLift,
            }),
            gamma: self.gamma,
            c: self.c,
            lr: self.lr,
            iters: self.iters,
            arch: self.arch.clone(),
            bc: self.bc.map(|b| match b {
                BcArg::Neumann => Boundary::Neumann,
                BcArg::Dirichlet => Boundary::Dirichlet,
            }),
            input: self.input.clone(),
            size: self.size,
            noise_sigma: self.noise_sigma,
            sp_prob: self.sp_prob,
            mask: self.mask.clone(),
            kernel: self.kernel.clone(),
            blur_size: self.blur_size,
            blur_sigma: self.blur_sigma,
            fine_factor: self.fine_factor,
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let (task, args) = match cli.command {
        Command::Denoise(a) => (Task::Denoise, a),
        Command::Inpaint(a) => (Task::Inpaint, a),
        Command::Deblur(a) => (Task::Deblur, a),
        Command::Sweep1d(a) => (Task::Sweep1d, a),
        Command::Sweep2d(a) => (Task::Sweep2d, a),
        Command::FdBaseline(a) => (Task::FdBaseline, a),
        Command::ErrorTrack(a) => (Task::ErrorTrack, a),
        Command::Plots { dir } => {
            for path in emit_plots(&dir)? {
                println!("{}", path.display());
            }
            return Ok(());
        }
    };
    let preset = match args.preset {
        PresetArg::Ci => Preset::Ci,
        PresetArg::Paper => Preset::Paper,
    };
    let cfg = RunConfig::resolve(task, preset, args.config.as_deref(), &args.overrides())?;
    if args.dry_run {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    let report = run_task(&cfg)?;
    for (k, v) in &report.values {
        println!("{k} = {v}");
    }
    println!("artifacts in {}", report.dir.display());
    Ok(())
}
