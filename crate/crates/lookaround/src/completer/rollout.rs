//! Episode rollouts: thread the network stages over T glimpses.

use std::collections::BTreeSet;

use rand::Rng;

use crate::autodiff::{ParamStore, Tape, ValueId};
use crate::gridworld::{apply_action, grid_mse, make_proprioception, Action, MotionModel,
                       Proprioception, ViewGrid, Viewpoint};

use super::net::{act, aggregate, decode, fuse, sense, ActMode, ActSelect, AggState};
use super::{CompleterError, ModelConfig};

/// What an external policy sees when asked for the next action.
///
/// Everything is in the world frame; privileged policies (which may peek at
/// unobserved cells) and honest baselines both fit this interface, the
/// difference being which fields they read.
pub struct PolicyCtx<'a> {
    pub world: &'a ViewGrid,
    /// Where the agent currently stands.
    pub current: Viewpoint,
    /// Every cell observed so far this episode.
    pub visited: &'a BTreeSet<Viewpoint>,
    pub motion: MotionModel,
    /// 1-based index of the glimpse the chosen action will produce.
    pub step: usize,
}

/// An action source other than the learned act stage.
pub trait ViewPolicy {
    fn select_action(&mut self, ctx: &PolicyCtx<'_>) -> Action;
}

/// Who chooses actions during a rollout.
pub enum RolloutPolicy<'a> {
    /// The model's own act stage.
    Learned(ActMode),
    /// An external action source (baseline policies, transfer drivers).
    External(&'a mut dyn ViewPolicy),
    /// A fixed list of action indices, one per step; the act stage still
    /// runs and records each choice's log-probability. Used by gradient
    /// oracles that enumerate action sequences.
    Scripted(&'a [usize]),
}

/// The action taken after a step, as recorded on the trace.
#[derive(Clone, Debug)]
pub struct ActionRecord {
    /// Canonical action index.
    pub index: usize,
    pub action: Action,
    /// `ln pi(action)` node — present only when the act stage ran (learned
    /// or scripted rollouts).
    pub log_prob: Option<ValueId>,
    /// The action distribution at selection time, when the act stage ran.
    pub probs: Option<Vec<f32>>,
}

/// Everything recorded at one step of an episode.
#[derive(Clone, Debug)]
pub struct StepRecord {
    /// Where the view was taken, world frame.
    pub viewpoint: Viewpoint,
    /// The same cell in the agent frame (azimuth relative to the start).
    pub agent_cell: Viewpoint,
    /// The observed pixels.
    pub observation: Vec<f32>,
    pub proprio: Proprioception,
    /// The action taken after this view; `None` on the final step.
    pub action: Option<ActionRecord>,
    /// The full-grid prediction after this view (agent frame).
    pub prediction: Vec<f32>,
    /// Which cells of the prediction were pasted observations.
    pub pasted_cells: Vec<bool>,
    /// Tape node of the prediction, for attaching losses.
    pub pred_node: ValueId,
    /// Reconstruction error of `prediction` against the agent-frame world,
    /// computed outside the tape ([`grid_mse`]): the metric counterpart of
    /// the differentiable loss the trainer attaches.
    pub loss: f64,
}

/// One episode: the tape that recorded it plus per-step records.
#[derive(Debug)]
pub struct EpisodeTrace {
    pub tape: Tape,
    pub steps: Vec<StepRecord>,
    /// World azimuth of the first view: the agent frame is the world frame
    /// rolled left by this amount.
    pub delta0: usize,
    /// Where the episode started, world frame.
    pub start: Viewpoint,
}

impl EpisodeTrace {
    /// Reconstruction error after the final glimpse.
    pub fn final_loss(&self) -> f64 {
        self.steps.last().expect("episodes have at least one step").loss
    }
}

/// Runs one episode of `cfg.episode_len` glimpses against `world`, starting
/// at `start`.
pub fn rollout(
    world: &ViewGrid,
    start: Viewpoint,
    cfg: &ModelConfig,
    params: &ParamStore,
    policy: RolloutPolicy<'_>,
    rng: &mut impl Rng,
) -> Result<EpisodeTrace, CompleterError> {
    rollout_with_tape(Tape::new(), world, start, cfg, params, policy, rng)
}

/// [`rollout`] onto a caller-provided tape (e.g. a high-precision tape for
/// finite-difference checks).
pub fn rollout_with_tape(
    mut tape: Tape,
    world: &ViewGrid,
    start: Viewpoint,
    cfg: &ModelConfig,
    params: &ParamStore,
    mut policy: RolloutPolicy<'_>,
    rng: &mut impl Rng,
) -> Result<EpisodeTrace, CompleterError> {
    cfg.validate()?;
    let dims = world.dims();
    if dims != cfg.dims {
        return Err(CompleterError::DimsMismatch {
            expected: format!("{:?}", cfg.dims),
            got: format!("{dims:?}"),
        });
    }
    assert!(
        start.elev < dims.n_elev && start.azim < dims.m_azim,
        "start viewpoint {start} outside grid"
    );
    if let RolloutPolicy::Scripted(script) = policy {
        if script.len() < cfg.episode_len - 1 {
            return Err(CompleterError::ScriptTooShort {
                needed: cfg.episode_len - 1,
                got: script.len(),
            });
        }
    }

    let delta0 = start.azim;
    // The agent predicts in its own frame, so losses compare against the
    // world re-expressed in that frame.
    let target = world.roll_azimuth(delta0);

    let mut steps = Vec::with_capacity(cfg.episode_len);
    let mut visited = BTreeSet::new();
    let mut current = start;
    visited.insert(current);
    let mut last_action_index: Option<usize> = None;
    let mut state: Option<AggState> = None;
    let mut seen: Vec<(Viewpoint, ValueId)> = Vec::new();

    for t in 1..=cfg.episode_len {
        let viewpoint = current;
        let observation = world.view(viewpoint).to_vec();
        let obs = tape.leaf_slice(&observation);
        let proprio = make_proprioception(dims, cfg.motion, viewpoint.elev, last_action_index);
        let pro = tape.leaf_slice(proprio.values());

        let s = sense(&mut tape, obs, pro, params)?;
        let f = fuse(&mut tape, s, params)?;
        let next_state = aggregate(&mut tape, state.as_ref(), f, params)?;
        state = Some(next_state);

        let agent_cell = Viewpoint {
            elev: viewpoint.elev,
            azim: (viewpoint.azim + dims.m_azim - delta0) % dims.m_azim,
        };
        seen.push((agent_cell, obs));
        let decoded = decode(&mut tape, next_state.h, &seen, params, dims)?;
        let prediction = tape.value(decoded.grid).to_vec();
        let loss = grid_mse(&prediction, &target, None)?;

        let action = if t < cfg.episode_len {
            let record = match &mut policy {
                RolloutPolicy::Learned(mode) => {
                    let out =
                        act(&mut tape, next_state.h, params, cfg.motion, (*mode).into(), rng)?;
                    ActionRecord {
                        index: out.index,
                        action: out.action,
                        log_prob: Some(out.log_prob),
                        probs: Some(out.probs),
                    }
                }
                RolloutPolicy::Scripted(script) => {
                    let out = act(
                        &mut tape,
                        next_state.h,
                        params,
                        cfg.motion,
                        ActSelect::Forced(script[t - 1]),
                        rng,
                    )?;
                    ActionRecord {
                        index: out.index,
                        action: out.action,
                        log_prob: Some(out.log_prob),
                        probs: Some(out.probs),
                    }
                }
                RolloutPolicy::External(chooser) => {
                    let ctx = PolicyCtx {
                        world,
                        current: viewpoint,
                        visited: &visited,
                        motion: cfg.motion,
                        step: t + 1,
                    };
                    let action = chooser.select_action(&ctx);
                    let index = cfg
                        .motion
                        .action_index(action)
                        .ok_or(CompleterError::IllegalAction { action, step: t })?;
                    ActionRecord { index, action, log_prob: None, probs: None }
                }
            };
            last_action_index = Some(record.index);
            current = apply_action(dims, viewpoint, record.action);
            visited.insert(current);
            Some(record)
        } else {
            None
        };

        steps.push(StepRecord {
            viewpoint,
            agent_cell,
            observation,
            proprio,
            action,
            prediction,
            pasted_cells: decoded.pasted_cells,
            pred_node: decoded.grid,
            loss,
        });
    }

    Ok(EpisodeTrace { tape, steps, delta0, start })
}
