//! `mnar`: generate transfer pairs, compute designs, sample, fit and run
//! seeded experiments.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mnar_core::{Error, ModelKind, RidgePolicy, ShiftKind};

#[derive(Parser, Debug)]
#[command(name = "mnar", version, about = "Matrix transfer under row/column missingness")]
struct Cli {
    /// Worker threads for experiment trials.
    #[arg(long, global = true, env = "MNAR_THREADS")]
    threads: Option<usize>,

    /// Overrides the seed given in a config or by default.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic source/target pair to a directory.
    Generate(GenerateArgs),
    /// Frank-Wolfe design over the rows of a feature CSV.
    Design(DesignArgs),
    /// Draw observations of a stored pair.
    Sample(SampleArgs),
    /// Fit the transfer estimator and predict the target.
    Estimate(EstimateArgs),
    /// Run the trials described by an experiment config.
    Experiment(ExperimentArgs),
    /// Check the perturbation bounds and design tensorization numerically.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Model {
    Coherent,
    Partition,
    General,
}

impl From<Model> for ModelKind {
    fn from(m: Model) -> Self {
        match m {
            Model::Coherent => ModelKind::Coherent,
            Model::Partition => ModelKind::Partition,
            Model::General => ModelKind::General,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Shift {
    Identity,
    Rotation,
    General,
}

impl From<Shift> for ShiftKind {
    fn from(s: Shift) -> Self {
        match s {
            Shift::Identity => ShiftKind::Identity,
            Shift::Rotation => ShiftKind::Rotation,
            Shift::General => ShiftKind::General,
        }
    }
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Experiment config to take the model settings from.
    #[arg(long, conflicts_with_all = ["model", "m", "n", "d"])]
    config: Option<PathBuf>,
    #[arg(long, value_enum, required_unless_present = "config")]
    model: Option<Model>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, required_unless_present = "config")]
    d: Option<usize>,
    /// Diagonal boost of the partition block matrix.
    #[arg(long, default_value_t = 0.1)]
    a: f64,
    /// Upper end of the partition block values.
    #[arg(long, default_value_t = 0.8)]
    b: f64,
    #[arg(long, value_enum, default_value = "general")]
    shift: Shift,
    #[arg(long, default_value_t = 1.0)]
    magnitude: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DesignArgs {
    /// Matrix CSV whose rows are the candidate vectors (e.g. Uhat.csv).
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    #[arg(long, default_value_t = mnar_core::design::DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Skip the support-reduction pass.
    #[arg(long)]
    no_prune: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Passive,
    Active,
}

#[derive(Args, Debug)]
struct SampleArgs {
    /// Directory written by `generate`.
    #[arg(long)]
    pair: PathBuf,
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long, default_value_t = 0.1)]
    p_row: f64,
    #[arg(long, default_value_t = 0.1)]
    p_col: f64,
    /// Row design JSON; with `--features-dir`, computed when absent.
    #[arg(long)]
    row_design: Option<PathBuf>,
    #[arg(long)]
    col_design: Option<PathBuf>,
    /// Feature directory (Uhat.csv, Vhat.csv) used to compute designs.
    #[arg(long)]
    features_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    #[arg(long)]
    t_row: Option<usize>,
    #[arg(long)]
    t_col: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    sigma_q: f64,
    /// Also write a MCAR-masked copy of P with this keep probability.
    #[arg(long)]
    p_source: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    sigma_p: f64,
    /// Target observations CSV (active samples get a `.json` sidecar).
    #[arg(long)]
    out: PathBuf,
    /// Where to write the masked source.
    #[arg(long, requires = "p_source")]
    source_out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Fit {
    Product,
    Direct,
    Lll22,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Ridge {
    Auto,
    Disabled,
}

impl From<Ridge> for RidgePolicy {
    fn from(r: Ridge) -> Self {
        match r {
            Ridge::Auto => RidgePolicy::Auto,
            Ridge::Disabled => RidgePolicy::Disabled,
        }
    }
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Masked source CSV; features are extracted from it.
    #[arg(long, required_unless_present = "features_dir")]
    source: Option<PathBuf>,
    /// Previously saved features, used instead of `--source`.
    #[arg(long, conflicts_with = "source")]
    features_dir: Option<PathBuf>,
    /// Target observations written by `sample`.
    #[arg(long)]
    obs: PathBuf,
    #[arg(long)]
    d: usize,
    #[arg(long, value_enum, default_value = "product")]
    fit: Fit,
    #[arg(long, value_enum, default_value = "auto")]
    ridge: Ridge,
    /// True target; when given, errors are reported.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Result CSV; defaults to the config's output_path, then results.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Report JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Exit status for a failed command: 2 for bad input, 3 for numerical failure.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::RankDeficient(_) | Error::Convergence { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = commands::Context {
        threads: cli.threads,
        seed: cli.seed,
    };
    let result = match cli.command {
        Command::Generate(a) => commands::generate(&ctx, a),
        Command::Design(a) => commands::design(a),
        Command::Sample(a) => commands::sample(&ctx, a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Experiment(a) => commands::experiment(&ctx, a),
        Command::Verify(a) => commands::verify(&ctx, a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
