mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "streamcnn",
    version,
    about = "Streaming temporal-CNN inference experiments"
)]
pub struct Cli {
    /// Seed for every random model, weight and signal.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Directory that receives output files; created when missing.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,

    /// Encoding of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Empirical pooling shift error against the analytic bound, swept over
    /// the sample rate and over the pooling length.
    PoolBounds(PoolBoundsArgs),
    /// Zero-padding contamination per layer plus a shiftability report.
    Probe(ProbeArgs),
    /// NRMSE of streaming against full-window inference, per mode.
    StreamCompare(StreamCompareArgs),
    /// Wall-clock time per window of full inference and both streaming modes.
    Speedup(SpeedupArgs),
    /// Writes a reference or random model manifest and weight blob.
    GenModel(GenModelArgs),
    /// Writes a synthetic or noise signal.
    GenSignal(GenSignalArgs),
}

#[derive(Debug, Args)]
pub struct PoolBoundsArgs {
    /// Pooling kind: max, avg or first.
    #[arg(long, default_value = "max")]
    pub kind: String,
    /// Base frequency of both test signals in Hz.
    #[arg(long, default_value_t = 1.0)]
    pub f0: f64,
    /// Harmonic count of the multi-frequency signal.
    #[arg(long, default_value_t = 5)]
    pub harmonics: usize,
    /// Pooling window length in seconds for the sample-rate sweep.
    #[arg(long, default_value_t = 8.0)]
    pub pool_window_s: f64,
    /// Sample rates for the sample-rate sweep (default 32..1024 Hz).
    #[arg(long, value_delimiter = ',')]
    pub fs_list: Option<Vec<f64>>,
    /// Pooling lengths for the pooling-length sweep (default 2..65536).
    #[arg(long, value_delimiter = ',')]
    pub lp_list: Option<Vec<usize>>,
    /// Sample rate of the pooling-length sweep in Hz.
    #[arg(long, default_value_t = 256.0)]
    pub fs: f64,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    /// Model manifest (JSON).
    pub model: PathBuf,
    /// Step used for the alignment part of the report (default: the model's).
    #[arg(long)]
    pub step: Option<usize>,
    /// Input band limit in Hz for the per-stage bounds (default: Nyquist).
    #[arg(long)]
    pub f_max: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ModelSource {
    /// Model manifest; a seeded random model is drawn when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Window length of the random model.
    #[arg(long, default_value_t = 256)]
    pub window: usize,
    /// Input channels of the random model.
    #[arg(long, default_value_t = 1)]
    pub input_channels: usize,
    /// Maximum number of pooling layers in the random model.
    #[arg(long, default_value_t = 0)]
    pub pools: usize,
}

#[derive(Debug, Args)]
pub struct StreamCompareArgs {
    #[command(flatten)]
    pub source: ModelSource,
    /// Step S (default: the model's).
    #[arg(long)]
    pub step: Option<usize>,
    /// Signal file (.csv or .raw); seeded Gaussian noise when omitted.
    #[arg(long)]
    pub signal: Option<PathBuf>,
    /// Sample rate of a CSV signal (default: the model's).
    #[arg(long)]
    pub fs: Option<f64>,
    /// Number of noise windows to stream when no signal is given.
    #[arg(long, default_value_t = 8)]
    pub windows: usize,
    /// Streaming modes to compare.
    #[arg(long, value_delimiter = ',', default_value = "exact,approx")]
    pub modes: Vec<String>,
    /// Accept a step that breaks pooling alignment.
    #[arg(long)]
    pub force_misaligned: bool,
}

#[derive(Debug, Args)]
pub struct SpeedupArgs {
    #[command(flatten)]
    pub source: ModelSource,
    /// Steps S to time (default: L/2, L/4, ... down to L/32 where aligned).
    #[arg(long, value_delimiter = ',')]
    pub steps: Option<Vec<usize>>,
    /// Timed repetitions per step and mode (at least 10).
    #[arg(long, default_value_t = 15)]
    pub repetitions: usize,
    /// Untimed warm-up repetitions.
    #[arg(long, default_value_t = 3)]
    pub warmup: usize,
    /// Window outputs per repetition.
    #[arg(long, default_value_t = 16)]
    pub windows_per_rep: usize,
}

#[derive(Debug, Args)]
pub struct GenModelArgs {
    /// h_ppg, h_eeg, h_acc or random.
    #[arg(long)]
    pub name: String,
    /// Window length of a random model.
    #[arg(long, default_value_t = 256)]
    pub window: usize,
    /// Step of a random model.
    #[arg(long, default_value_t = 64)]
    pub step: usize,
    /// Maximum pooling layers of a random model.
    #[arg(long, default_value_t = 0)]
    pub pools: usize,
    /// Input channels of a random model.
    #[arg(long, default_value_t = 1)]
    pub input_channels: usize,
    /// Manifest file name stem (default: the model name).
    #[arg(long)]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SignalSource {
    Mono,
    Multi,
    Noise,
}

#[derive(Debug, Args)]
pub struct GenSignalArgs {
    #[arg(long, value_enum, default_value_t = SignalSource::Mono)]
    pub kind: SignalSource,
    #[arg(long, default_value_t = 1.0)]
    pub f0: f64,
    #[arg(long, default_value_t = 5)]
    pub harmonics: usize,
    #[arg(long, default_value_t = 10.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 256.0)]
    pub fs: f64,
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    /// Write little-endian f32 with a JSON sidecar instead of CSV.
    #[arg(long)]
    pub raw: bool,
    /// Output file name stem.
    #[arg(long, default_value = "signal")]
    pub output: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
