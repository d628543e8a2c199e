//! The completion network: five stages from a glimpse to a full-grid guess.
//!
//! At every step the agent runs:
//!
//! 1. **sense** — encode the current view and the proprioception vector
//!    through separate affine+tanh stacks and concatenate the codes.
//! 2. **fuse** — mix the concatenated code through one affine+tanh layer.
//! 3. **aggregate** — fold the fused code into a recurrent (LSTM) state
//!    that summarises everything seen so far.
//! 4. **decode** — expand the recurrent state to a full view grid in the
//!    *agent frame* (azimuth measured from the first view), then paste the
//!    actually-observed views over their cells. Observed cells are exact by
//!    construction, and the paste routes their gradient away from the
//!    decoder.
//! 5. **act** — map the recurrent state to a distribution over the legal
//!    motions and pick one (sampled during training, argmax if desired at
//!    evaluation). The final step of an episode predicts without acting.
//!
//! A [`rollout`] threads these stages over an episode on a single tape and
//! returns an [`EpisodeTrace`] the trainer can attach losses to.

mod model;
mod net;
mod rollout;

use thiserror::Error;

use crate::autodiff::TapeError;
use crate::gridworld::{Action, GridError, Viewpoint};

pub use model::{init_params, ModelConfig};
pub(crate) use model::{init_affine, init_encoder_params};
pub use net::{act, aggregate, decode, fuse, sense, ActMode, ActOutcome, ActSelect, AggState,
              DecodeOut};
pub use rollout::{rollout, rollout_with_tape, ActionRecord, EpisodeTrace, PolicyCtx,
                  RolloutPolicy, StepRecord, ViewPolicy};

/// Errors from building or running the completion network.
#[derive(Debug, Error)]
pub enum CompleterError {
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("bad model config: {0}")]
    BadConfig(String),
    #[error("model expects {expected}, world has {got}")]
    DimsMismatch { expected: String, got: String },
    #[error("external policy chose illegal action {action} at step {step}")]
    IllegalAction { action: Action, step: usize },
    #[error("conflicting observations pasted for cell {0}")]
    ConflictingRevisit(Viewpoint),
    #[error("scripted rollout provides {got} actions but the episode needs {needed}")]
    ScriptTooShort { needed: usize, got: usize },
}
