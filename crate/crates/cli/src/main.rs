//! `eigentomo` command-line front end.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use eigentomo::costs::CostKind;
use eigentomo::measurement::BasisMode;
use eigentomo::reconstructor::DEFAULT_FLOOR;

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_VERIFY: u8 = 3;

#[derive(Clone, Debug, Parser, Serialize, Deserialize)]
#[command(name = "eigentomo", version, about = "Iterative eigenstate tomography of mixed states")]
pub struct Cli {
    /// Base seed for every random choice of the command.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Directory that receives all outputs (created if missing).
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,

    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "EIGENTOMO_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Subcommand, Serialize, Deserialize)]
pub enum Command {
    /// Build a synthetic state and its measurement dataset.
    Synth(SynthArgs),
    /// Run the iterative reconstruction on a dataset.
    Reconstruct(ReconstructArgs),
    /// Run the proposition oracle over the verification corpus.
    Verify(VerifyArgs),
    /// Emit CSV data for the cost-function and entropy figures.
    Figdata(FigdataArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    BellMixture,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasesArg {
    Full,
    Compressed,
}

impl From<BasesArg> for BasisMode {
    fn from(b: BasesArg) -> Self {
        match b {
            BasesArg::Full => BasisMode::Full,
            BasesArg::Compressed => BasisMode::Compressed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostArg {
    L1,
    L15,
    L2,
    Kl1,
    Kl2,
}

impl From<CostArg> for CostKind {
    fn from(c: CostArg) -> Self {
        match c {
            CostArg::L1 => CostKind::L1,
            CostArg::L15 => CostKind::L15,
            CostArg::L2 => CostKind::L2,
            CostArg::Kl1 => CostKind::KL1,
            CostArg::Kl2 => CostKind::KL2,
        }
    }
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["preset", "w"])))]
pub struct SynthArgs {
    /// Named state.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,

    /// Approximate W state on this many qubits.
    #[arg(long, requires = "spectrum")]
    pub w: Option<usize>,

    /// Leading eigenvalues (comma separated); the rest is spread uniformly.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub spectrum: Vec<f64>,

    /// Strength of the seeded rotation applied to the W eigenbasis.
    #[arg(long, default_value_t = eigentomo::measurement::DEFAULT_W_PERTURBATION)]
    pub perturbation: f64,

    #[arg(long, value_enum, default_value_t = BasesArg::Full)]
    pub bases: BasesArg,

    /// Shots per basis; omit for exact probabilities.
    #[arg(long)]
    pub shots: Option<u64>,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value_t = CostArg::L15)]
    pub cost: CostArg,

    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,

    #[arg(long, default_value_t = 20_000)]
    pub epochs: usize,

    #[arg(long, default_value_t = 1)]
    pub restarts: usize,

    /// Bases drawn per epoch (stochastic mode).
    #[arg(long)]
    pub batch_bases: Option<usize>,

    #[arg(long, default_value_t = 200)]
    pub patience: usize,

    /// Hidden units per machine (default: number of qubits).
    #[arg(long)]
    pub hidden: Option<usize>,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct ReconstructArgs {
    /// Dataset file (JSON lines).
    pub dataset: PathBuf,

    /// Ground-truth density matrix for the comparison table.
    #[arg(long)]
    pub truth: Option<PathBuf>,

    /// Target pure state (e.g. the ideal W state) for the table.
    #[arg(long)]
    pub target: Option<PathBuf>,

    #[arg(long, default_value_t = 2)]
    pub max_rank: usize,

    /// Minimum denominator for the eigenvalue estimate.
    #[arg(long, default_value_t = DEFAULT_FLOOR)]
    pub floor: f64,

    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct VerifyArgs {
    /// Dimensions of the random corpus members.
    #[arg(long, value_delimiter = ',', default_values_t = vec![2usize, 4, 8, 16])]
    pub dims: Vec<usize>,

    #[arg(long, default_value_t = 200)]
    pub trials: usize,

    #[arg(long, default_value_t = 100)]
    pub n_random: usize,

    /// Leave out the Bell mixture and W states.
    #[arg(long)]
    pub no_named: bool,

    /// Bias added to every fidelity the oracle computes (negative control).
    #[arg(long, hide = true, default_value_t = 0.0)]
    pub inject_fault: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig3,
    Fig4,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct FigdataArgs {
    #[arg(value_enum)]
    pub figure: Figure,

    /// Mixed state the figure is built from.
    #[arg(long)]
    pub state: PathBuf,

    /// Dataset for the cost grid; defaults to exact data over all bases.
    #[arg(long)]
    pub dataset: Option<PathBuf>,

    /// Reconstruction result whose first eigenstate replaces the true one (fig4).
    #[arg(long)]
    pub result: Option<PathBuf>,

    #[arg(long, default_value_t = 50)]
    pub perturbations: usize,

    #[arg(long, default_value_t = 0.1)]
    pub max_strength: f64,

    #[arg(long, default_value_t = DEFAULT_FLOOR)]
    pub floor: f64,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
