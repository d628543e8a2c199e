//! Command-line surface: subcommands, flags, and flag-level validation.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lookaround::completer::ActMode;
use lookaround::gridworld::MotionModel;

use crate::errors::CliError;

/// Learning to look around a hidden view grid, end to end: generate worlds,
/// train the completion model, compare exploration policies, transfer the
/// policy to a recognition task, and render episodes.
#[derive(Parser)]
#[command(name = "lookaround", version, about, max_term_width = 100)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a dataset of synthetic worlds as VGRD1 files.
    Gen(GenArgs),
    /// Phase 1: train the completion network on single-glimpse episodes.
    Pretrain(PretrainArgs),
    /// Phase 2: train the look-around policy from a pretrained checkpoint.
    Train(TrainArgs),
    /// Tabulate reconstruction error for the trained policy and baselines.
    Eval(EvalArgs),
    /// Train a recognition model and drive it with the learned policy.
    Transfer(TransferArgs),
    /// Render episodes as PNG montages with plain-text sidecars.
    Dump(DumpArgs),
}

/// Motion neighborhood and episode-length presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Panorama-style exploration: a 3x5 neighborhood, 6 glimpses.
    Scene,
    /// Object-style exploration: a 5x5 neighborhood, 4 glimpses.
    Object,
}

impl Preset {
    pub fn motion(self) -> MotionModel {
        match self {
            Preset::Scene => MotionModel { e_radius: 1, a_radius: 2 },
            Preset::Object => MotionModel { e_radius: 2, a_radius: 2 },
        }
    }

    pub fn default_episode_len(self) -> usize {
        match self {
            Preset::Scene => 6,
            Preset::Object => 4,
        }
    }
}

/// How policies pick actions at evaluation time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Draw from the action distribution (matches training).
    Sample,
    /// Always take the most probable action.
    Argmax,
}

impl From<Mode> for ActMode {
    fn from(mode: Mode) -> Self {
        match mode {
            Mode::Sample => ActMode::Sample,
            Mode::Argmax => ActMode::Argmax,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Family {
    /// One glyph-carrying beacon cell and a halo that fades with azimuth
    /// distance.
    Lighthouse,
    /// An azimuth-invariant vertical intensity ramp.
    GradientSky,
    /// Class-specific stripes on one azimuth half, noise on the other.
    TexturedHalves,
}

#[derive(Args)]
pub struct GenArgs {
    /// World family to generate.
    #[arg(long, value_enum)]
    pub family: Family,
    /// How many worlds to write.
    #[arg(long)]
    pub count: usize,
    /// Classes: glyph count for lighthouse (default 4), texture classes for
    /// textured-halves (default 10). Not accepted for gradient-sky.
    #[arg(long)]
    pub classes: Option<u32>,
    /// Base seed; world i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for world_NNNNN.vgrd files and the manifest.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct PretrainArgs {
    /// Directory of .vgrd training worlds.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for checkpoint.glmp, train.log, and the manifest.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Parameter updates to run.
    #[arg(long, default_value_t = 1000)]
    pub updates: usize,
    /// Episodes averaged per update.
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f32,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f32,
    /// Motion preset (decides proprioception and act-stage sizes).
    #[arg(long, value_enum, default_value_t = Preset::Object)]
    pub preset: Preset,
    /// Glimpses per episode; pretraining accepts only 1.
    #[arg(long = "T")]
    pub episode_len: Option<usize>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Directory of .vgrd training worlds.
    #[arg(long)]
    pub data: PathBuf,
    /// Pretrained checkpoint to continue from.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output directory for checkpoint.glmp, train.log, and the manifest.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub updates: usize,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f32,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f32,
    /// Reward-baseline decay.
    #[arg(long, default_value_t = 0.9)]
    pub beta: f32,
    #[arg(long, value_enum, default_value_t = Preset::Object)]
    pub preset: Preset,
    /// Glimpses per episode (default: the preset's).
    #[arg(long = "T")]
    pub episode_len: Option<usize>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Directory of .vgrd test worlds.
    #[arg(long)]
    pub data: PathBuf,
    /// Trained checkpoint to evaluate.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output directory for completion.csv and the manifest.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Preset::Object)]
    pub preset: Preset,
    /// Glimpses per episode (default: the preset's).
    #[arg(long = "T")]
    pub episode_len: Option<usize>,
    /// Action selection for the learned policy.
    #[arg(long, value_enum, default_value_t = Mode::Sample)]
    pub mode: Mode,
}

#[derive(Args)]
pub struct TransferArgs {
    /// Dataset root holding train/ (recognition classes) and test/ subdirs
    /// of .vgrd worlds.
    #[arg(long)]
    pub data: PathBuf,
    /// Completion-model checkpoint whose policy drives the classifier.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output directory for transfer.csv, classifier.log, and the manifest.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Classifier training updates.
    #[arg(long, default_value_t = 1000)]
    pub updates: usize,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f32,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f32,
    #[arg(long, value_enum, default_value_t = Preset::Object)]
    pub preset: Preset,
    /// Glimpses per episode (default: the preset's).
    #[arg(long = "T")]
    pub episode_len: Option<usize>,
    /// Action selection for the driving policy.
    #[arg(long, value_enum, default_value_t = Mode::Sample)]
    pub mode: Mode,
}

#[derive(Args)]
pub struct DumpArgs {
    /// Directory of .vgrd worlds to roll episodes on.
    #[arg(long)]
    pub data: PathBuf,
    /// Trained checkpoint to run.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output directory for episode_NNNNN.png/.txt and the manifest.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// How many worlds to dump, in filename order.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, value_enum, default_value_t = Preset::Object)]
    pub preset: Preset,
    /// Glimpses per episode (default: the preset's).
    #[arg(long = "T")]
    pub episode_len: Option<usize>,
    /// Action selection for the learned policy.
    #[arg(long, value_enum, default_value_t = Mode::Sample)]
    pub mode: Mode,
}

/// Fails with a usage error naming `flag` unless `ok` holds.
pub fn require(ok: bool, flag: &str, message: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{flag}: {message}")))
    }
}

/// Validates the shared optimizer flags.
pub fn check_optim(updates: usize, batch: usize, lr: f32, momentum: f32) -> Result<(), CliError> {
    require(updates >= 1, "--updates", "at least one update is required")?;
    require(batch >= 1, "--batch", "batch size must be at least 1")?;
    require(lr.is_finite() && lr > 0.0, "--lr", "learning rate must be positive")?;
    require((0.0..1.0).contains(&momentum), "--momentum", "must lie in [0, 1)")?;
    Ok(())
}

/// Resolves `--T` against the preset default and validates it.
pub fn resolve_episode_len(flag: Option<usize>, preset: Preset) -> Result<usize, CliError> {
    let t = flag.unwrap_or_else(|| preset.default_episode_len());
    require(t >= 1, "--T", "episodes need at least one glimpse")?;
    Ok(t)
}
