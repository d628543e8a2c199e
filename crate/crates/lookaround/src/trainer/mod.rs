//! Training: reconstruction pretraining, policy-gradient fine-tuning, and
//! checkpointing.
//!
//! An episode is trained from two directions at once:
//!
//! * every per-step prediction pays a reconstruction loss against the true
//!   grid (rolled into the agent frame), and
//! * the final reconstruction error, negated, is the episode's reward; a
//!   score-function (REINFORCE) term pushes the action distribution toward
//!   glimpse sequences that ended well, with a running baseline subtracted
//!   to tame variance.
//!
//! Both flows are seeded on the same tape and merged by a single backward
//! pass. Training runs in two phases: [`pretrain_t1`] teaches the network
//! to complete grids from a single glimpse (no actions to credit), then
//! [`train_policy`] runs full-length episodes, optionally freezing modules
//! so that only the exploration behaviour keeps learning.

mod diagnostics;
mod loss;
mod run;

use std::io;

use thiserror::Error;

use crate::autodiff::{CheckpointError, TapeError};
use crate::completer::CompleterError;
use crate::gridworld::GridError;

pub use diagnostics::{enumerated_act_gradient, sampled_act_gradient};
pub use loss::{backprop_episode, backprop_episode_filtered, compute_reward, episode_loss,
               EpisodeLoss};
pub use run::{load_checkpoint, pretrain_t1, save_checkpoint, train_policy};
pub(crate) use run::episode_rng;

/// Module prefixes that a [`TrainConfig::freeze`] entry may name.
pub const FREEZABLE_MODULES: [&str; 5] = ["sense", "fuse", "agg", "decode", "act"];

/// Errors from configuring or running training.
#[derive(Debug, Error)]
pub enum TrainerError {
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Completer(#[from] CompleterError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("writing the training log: {0}")]
    Log(#[from] io::Error),
    #[error("bad train config: {0}")]
    BadConfig(String),
    #[error("episode loss is not finite ({value})")]
    NonFiniteLoss { value: f64 },
    #[error("step {step} has no action log-probability to credit")]
    MissingLogProb { step: usize },
    #[error("freeze set names unknown module {0:?}")]
    UnknownFreezeModule(String),
    #[error("training needs at least one world")]
    EmptyDataset,
    #[error("checkpoint has no `__baseline` entry")]
    MissingBaseline,
}

/// Hyperparameters for both training phases.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub lr: f32,
    pub momentum: f32,
    /// Episodes per parameter update.
    pub batch: usize,
    /// Updates in the policy phase ([`train_policy`]).
    pub updates: usize,
    /// Updates in the single-glimpse phase ([`pretrain_t1`]).
    pub pretrain_updates: usize,
    /// Decay of the running reward baseline.
    pub baseline_decay: f32,
    pub seed: u64,
    /// Glimpses per episode in the policy phase. Pretraining always uses 1.
    pub episode_len: usize,
    /// Modules excluded from policy-phase updates (see
    /// [`FREEZABLE_MODULES`]).
    pub freeze: Vec<String>,
}

impl TrainConfig {
    /// Defaults with everything but budgets filled in.
    pub fn new(seed: u64, episode_len: usize) -> Self {
        TrainConfig {
            lr: 0.01,
            momentum: 0.9,
            batch: 8,
            updates: 1000,
            pretrain_updates: 1000,
            baseline_decay: 0.9,
            seed,
            episode_len,
            freeze: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), TrainerError> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(TrainerError::BadConfig(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainerError::BadConfig(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch == 0 {
            return Err(TrainerError::BadConfig("batch must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return Err(TrainerError::BadConfig(format!(
                "baseline decay must be in [0, 1), got {}",
                self.baseline_decay
            )));
        }
        if self.episode_len == 0 {
            return Err(TrainerError::BadConfig("episodes need at least one glimpse".into()));
        }
        for module in &self.freeze {
            if !FREEZABLE_MODULES.contains(&module.as_str()) {
                return Err(TrainerError::UnknownFreezeModule(module.clone()));
            }
        }
        Ok(())
    }
}

/// Everything that persists across updates (and checkpoints).
#[derive(Debug)]
pub struct TrainState {
    pub params: crate::autodiff::ParamStore,
    /// Running estimate of expected reward (exponential moving average).
    pub baseline: f32,
    /// Updates applied so far, across both phases.
    pub updates_done: u64,
    /// Episodes drawn so far; also the RNG stream cursor, so restoring it
    /// replays the exact episode sequence.
    pub episode_counter: u64,
}
