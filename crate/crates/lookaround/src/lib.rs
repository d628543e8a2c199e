//! Active observation completion for panoramic view grids.
//!
//! An agent is dropped into a world it can only see one view at a time. Each
//! world is a grid of views indexed by elevation and azimuth; the agent picks
//! a small number of glimpses, and after every glimpse it predicts what the
//! *entire* grid looks like. Training needs no labels: the reconstruction
//! error of the final prediction is the (negative) reward for the glimpse
//! policy, and the same error provides a dense supervised signal for the
//! reconstruction pathway.
//!
//! The crate is organised around that loop:
//!
//! - [`gridworld`] — view grids, agent motion, synthetic world generators,
//!   and the `VGRD1` on-disk format.
//! - [`autodiff`] — a small reverse-mode tape over `f32` tensors, plus SGD,
//!   gradient checking, and the `GLMP1` checkpoint format.
//! - [`completer`] — the five-stage network (sense, fuse, aggregate, decode,
//!   act) and episode rollouts.
//! - [`trainer`] — reconstruction pretraining and policy training with a
//!   score-function gradient and a running reward baseline.
//! - [`evalsuite`] — reference policies, evaluation tables, and the
//!   transfer-to-classification protocol.
//!
//! Everything is deterministic given a seed: the same binary, seed, and
//! inputs produce bit-identical artifacts.

pub mod autodiff;
pub mod completer;
pub mod evalsuite;
pub mod gridworld;
pub mod trainer;
