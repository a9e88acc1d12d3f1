use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "qumode",
    version,
    about = "Continuous-variable Trotter simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Trotterised evolution of a single mode.
    Evolve(Common<EvolveArgs>),
    /// Top-hat evolver coefficients as JSON.
    EvolverState(Common<EvolverArgs>),
    /// Train the evolver-state preparation circuit.
    TrainPrep(Common<TrainArgs>),
    /// Lattice scalar field on a ring of qumodes.
    Qft(Common<QftArgs>),
    /// Trotter-versus-exact metric tables over several truncations.
    Metrics(Common<MetricsArgs>),
    /// Squeezing and composite-displacement demonstrations.
    Warmup(Common<WarmupArgs>),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Evolve(_) => "evolve",
            Command::EvolverState(_) => "evolver-state",
            Command::TrainPrep(_) => "train-prep",
            Command::Qft(_) => "qft",
            Command::Metrics(_) => "metrics",
            Command::Warmup(_) => "warmup",
        }
    }
}

/// Options shared by every subcommand plus the subcommand's own flags.
#[derive(Debug, Args)]
pub struct Common<T: Args> {
    /// JSON file of option values (keys as in the manifest `config`);
    /// values there override conflicting flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub args: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialKind {
    /// Asymmetric double well with depth parameter `--eps`.
    #[value(alias = "double-well")]
    Quartic,
    /// `cosh(x − x0) − 1`.
    Cosh,
    /// `x²/2`.
    Harmonic,
    /// `V ≡ 0`.
    Zero,
    /// `Σ c_k x^k` from `--coeffs`.
    Polynomial,
    /// Expression in `x` from `--expr`.
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Direct,
    Circuit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeArg {
    Delta,
    Squeezed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerArg {
    Spsa,
    FiniteDifference,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct PotentialArgs {
    #[arg(long, value_enum)]
    pub potential: Option<PotentialKind>,
    /// Double-well depth parameter.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Shift of the cosh potential.
    #[arg(long)]
    pub x0: Option<f64>,
    /// Polynomial coefficients, constant term first.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub coeffs: Option<Vec<f64>>,
    #[arg(long)]
    pub expr: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct GridArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub x_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub x_max: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
}

/// Gadget parameters `q`, `L`, `s` and the optional squeeze `r`, which must
/// satisfy `e^r s = q` when given.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct GadgetArgs {
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long = "L", id = "L")]
    #[serde(rename = "L")]
    pub l: Option<f64>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub r: Option<f64>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// Width of the squeezed homodyne projector.
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct EvolveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub potential: PotentialArgs,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub nmax: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[command(flatten)]
    #[serde(flatten)]
    pub gadget: GadgetArgs,
    #[arg(long)]
    pub record_every: Option<usize>,
    /// Initial coherent amplitude (vacuum when both parts are zero).
    #[arg(long, allow_hyphen_values = true)]
    pub alpha_re: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha_im: Option<f64>,
    /// Evolver coefficients JSON to inject in circuit mode.
    #[arg(long)]
    pub evolver: Option<PathBuf>,
    /// Trained preparation artifact whose heralded state is the evolver ket.
    #[arg(long)]
    pub prep: Option<PathBuf>,
    /// Also compare every record with the exact Fock-basis oracle.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub compare: Option<bool>,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct EvolverArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub potential: PotentialArgs,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub nmax: Option<usize>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long = "L", id = "L")]
    #[serde(rename = "L")]
    pub l: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub modes: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    /// Post-selected photon numbers for modes 0..modes−1.
    #[arg(long, value_delimiter = ',')]
    pub post: Option<Vec<usize>>,
    /// Evolver coefficients JSON to fit.
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Several seeds, each trained in its own subdirectory.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    /// SPSA gain numerator.
    #[arg(long)]
    pub a: Option<f64>,
    /// SPSA perturbation size.
    #[arg(long)]
    pub c: Option<f64>,
    /// SPSA stability constant.
    #[arg(long = "A", id = "A")]
    #[serde(rename = "A")]
    pub big_a: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Finite-difference learning rate.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Finite-difference step.
    #[arg(long)]
    pub fd_step: Option<f64>,
    #[arg(long)]
    pub init_scale: Option<f64>,
    #[arg(long)]
    pub boost: Option<f64>,
    /// Stop once the best loss reaches this value.
    #[arg(long)]
    pub target_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct QftArgs {
    /// Number of lattice sites M.
    #[arg(long)]
    pub sites: Option<usize>,
    /// Lattice spacing.
    #[arg(long)]
    pub a: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub potential: PotentialArgs,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub nmax: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[command(flatten)]
    #[serde(flatten)]
    pub gadget: GadgetArgs,
    /// Accept the doubled coupling of the single edge when M = 2.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub doubled_edge: Option<bool>,
    #[arg(long, allow_hyphen_values = true)]
    pub r0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha_re: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha_im: Option<f64>,
    /// Also compare with the exact lattice Hamiltonian.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub compare: Option<bool>,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct MetricsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub potential: PotentialArgs,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Truncations to compare, each run as its own worker.
    #[arg(long, value_delimiter = ',')]
    pub nmax: Option<Vec<usize>>,
    #[arg(long)]
    pub record_every: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct WarmupArgs {
    #[arg(long)]
    pub nmax: Option<usize>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
}
