use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use memstpn::energy::{BiasMode, GpuMode, Precision};

mod commands;
mod config;
mod error;
mod manifest;

use config::{ExperimentConfig, Scenario};
use error::CliResult;

#[derive(Parser, Debug)]
#[command(name = "memstpn", version, about = "Memristive m-STPN experiments: training, evaluation, device and energy tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train an agent and write a checkpoint, reward curve and manifest.
    Train(TrainArgs),
    /// Play episodes from a checkpoint and dump synapse traces.
    Eval(EvalArgs),
    /// Energy report for a synapse trace.
    Energy(EnergyArgs),
    /// Device characterization tools.
    #[command(subcommand)]
    Device(DeviceCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((p(lo)?, p(hi)?))
}

/// Flags that override fields of the experiment config.
#[derive(Args, Debug, Clone, Default)]
pub struct Overrides {
    /// Root seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of rollout workers.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Decay range of the core, as LO,HI.
    #[arg(long, value_name = "LO,HI", value_parser = parse_range)]
    pub lambda_range: Option<(f64, f64)>,
    /// Quantize and clamp short-term updates as the device would.
    #[arg(long, value_enum)]
    pub device_mode: Option<OnOff>,
    #[arg(long)]
    pub precision: Option<Precision>,
    #[arg(long)]
    pub gpu_mode: Option<GpuMode>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(w) = self.workers {
            cfg.train.n_workers = w;
        }
        if let Some(r) = self.lambda_range {
            cfg.train.lambda_range = r;
        }
        if let Some(m) = self.device_mode {
            cfg.agent.device_mode = m == OnOff::On;
        }
        if let Some(p) = self.precision {
            cfg.energy.precision = p;
        }
        if let Some(m) = self.gpu_mode {
            cfg.energy.gpu_mode = m;
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Print progress every this many updates (0 disables).
    #[arg(long, default_value_t = 100)]
    pub log_every: usize,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Experiment config naming the environment; defaults to `config.toml`
    /// next to the checkpoint.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub episodes: usize,
    /// Action selection; `sample` draws from the actor's softmax.
    #[arg(long, value_enum, default_value_t = PolicyArg::Greedy)]
    pub policy: PolicyArg,
    /// Stop each episode after this many steps.
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Greedy,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BiasModeArg {
    LongTerm,
    Instantaneous,
}

impl From<BiasModeArg> for BiasMode {
    fn from(b: BiasModeArg) -> Self {
        match b {
            BiasModeArg::LongTerm => BiasMode::LongTerm,
            BiasModeArg::Instantaneous => BiasMode::Instantaneous,
        }
    }
}

#[derive(Args, Debug)]
pub struct EnergyArgs {
    /// Synapse trace JSON written by `eval`.
    #[arg(long, required_unless_present = "synthetic_worst_case", conflicts_with = "synthetic_worst_case")]
    pub trace: Option<PathBuf>,
    /// Replay an update-free trace of the full-size network for one game.
    #[arg(long)]
    pub synthetic_worst_case: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub scenario: Option<Scenario>,
    #[arg(long, value_enum)]
    pub bias_mode: Option<BiasModeArg>,
    /// Cost the GPU at the full-size network instead of the trace's size.
    #[arg(long)]
    pub full_scale: bool,
    /// Restrict the time series to one synapse.
    #[arg(long)]
    pub synapse: Option<usize>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitKind {
    /// Columns `v_bias,lambda`.
    Sigmoid,
    /// Columns `delta_f,energy_pj`.
    PowerLaw,
}

#[derive(Subcommand, Debug)]
pub enum DeviceCommand {
    /// Least-squares refit of the decay sigmoid or the pulse-energy law.
    Fit {
        #[arg(long, value_enum)]
        kind: FitKind,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pulse realizing a short-term conductance change.
    PulsePlan {
        #[arg(long, allow_hyphen_values = true)]
        target_ns: f64,
        /// Pulse-grid CSV; defaults to the bundled characterization.
        #[arg(long)]
        characterization: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Conductance over time under a pulse/bias protocol.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Protocol TOML (`pulses`, `v_bias`, `duration_s`, `dt_s`); replaces the
    /// single-pulse flags.
    #[arg(long)]
    pub protocol: Option<PathBuf>,
    #[arg(long, default_value_t = 3.5)]
    pub voltage: f64,
    #[arg(long, default_value_t = 500.0)]
    pub width_us: f64,
    #[arg(long, default_value_t = 0.0)]
    pub pulse_at_s: f64,
    #[arg(long, default_value_t = -0.6, allow_hyphen_values = true)]
    pub v_bias: f64,
    #[arg(long, default_value_t = 2.0)]
    pub duration_s: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt_s: f64,
    /// Starting long-term conductance, nS; defaults to the device minimum.
    #[arg(long)]
    pub w_ns: Option<f64>,
    #[arg(long)]
    pub characterization: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train(a) => commands::train::run(&a),
        Command::Eval(a) => commands::eval::run(&a),
        Command::Energy(a) => commands::energy::run(&a),
        Command::Device(d) => commands::device::run(&d),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
