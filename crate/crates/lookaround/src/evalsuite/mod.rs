//! Evaluation: baseline policies, completion metric tables, and the
//! policy-transfer experiment.
//!
//! The questions this module answers:
//!
//! * **Does looking around help?** [`evaluate_policies`] runs the trained
//!   model and a set of learning-free baselines over a shared test set —
//!   same network, same starts, only the exploration policy differs — and
//!   tabulates reconstruction error against time plus each method's
//!   improvement over the single-glimpse baseline.
//! * **Does the learned *policy* itself carry value?**
//!   [`run_transfer`] trains a separate recognition model
//!   ([`train_classifier_random_policy`]) on its own classes with random
//!   exploration, then at test time lets the completion model choose where
//!   that classifier looks. If recognition improves over random exploration
//!   on classes the completion model never saw, the policy transferred.

mod evaluate;
mod metrics;
mod policies;
mod transfer;

use thiserror::Error;

use crate::autodiff::TapeError;
use crate::completer::CompleterError;
use crate::gridworld::{Action, GridError};

pub use evaluate::{evaluate_policies, PolicySpec};
pub use metrics::{CompletionRow, MetricTable, TransferRow};
pub use policies::{
    large_action_candidates, saliency_score, FixedActionPolicy, PeekSaliencyPolicy, RandomPolicy,
};
pub use transfer::{run_transfer, train_classifier_random_policy, ClassifierConfig, ModelA};

/// Errors from evaluation or transfer runs.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Completer(#[from] CompleterError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("evaluation needs at least one test world")]
    EmptyTestSet,
    #[error("bad evaluation request: {0}")]
    BadRequest(String),
    #[error("fixed action {0} is not on the motion-neighborhood perimeter")]
    NotPerimeter(Action),
    #[error("classification needs at least 2 classes, found {0}")]
    TooFewClasses(usize),
    #[error("world {0} has no label")]
    UnlabeledWorld(usize),
    #[error("world {world} is labeled {label}, which the classifier was not trained on")]
    UnknownLabel { world: usize, label: u32 },
    #[error("the two models move on different motion neighborhoods")]
    MotionModelMismatch,
    #[error("the two models expect different grid dimensions")]
    DimsMismatch,
    #[error("classifier training diverged: loss {value} is not finite")]
    NonFiniteLoss { value: f64 },
}
