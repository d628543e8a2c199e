//! Episode losses, rewards, and the combined backward pass.

use crate::autodiff::{Gradients, ParamStore, ValueId};
use crate::completer::EpisodeTrace;
use crate::gridworld::ViewGrid;

use super::{TrainState, TrainerError};

/// The differentiable losses of one episode, recorded on its tape.
#[derive(Clone, Copy, Debug)]
pub struct EpisodeLoss {
    /// Sum over steps of the per-step reconstruction error.
    pub total: ValueId,
    /// The final step's reconstruction error alone (the reward signal).
    pub final_step: ValueId,
}

/// Records the reconstruction loss of every step of `trace` against
/// `world`, on the trace's own tape.
///
/// The target is the world rolled into the agent frame (azimuth relative to
/// the episode's first view), entered once as a constant leaf. Each step
/// contributes the mean squared error of its full-grid prediction; the
/// total is their sum, so longer episodes pay for every intermediate guess
/// while the reward below looks only at the last one.
pub fn episode_loss(
    trace: &mut EpisodeTrace,
    world: &ViewGrid,
) -> Result<EpisodeLoss, TrainerError> {
    let target = world.roll_azimuth(trace.delta0);
    let target_leaf = trace.tape.leaf_slice(target.data());
    let mut total: Option<ValueId> = None;
    let mut last = None;
    for step in &trace.steps {
        let term = trace.tape.mse(step.pred_node, target_leaf, None)?;
        total = Some(match total {
            None => term,
            Some(acc) => trace.tape.add(acc, term)?,
        });
        last = Some(term);
    }
    let (total, final_step) = (total.expect("traces have steps"), last.expect("traces have steps"));
    Ok(EpisodeLoss { total, final_step })
}

/// Turns a final reconstruction error into a reward and an advantage, and
/// moves the running baseline.
///
/// The reward is the negated error, `R = -L_T`. The advantage subtracts the
/// baseline *before* the baseline absorbs this episode:
/// `advantage = R - b`, then `b <- decay * b + (1 - decay) * R`. Episodes
/// that beat the running expectation get positive advantage.
pub fn compute_reward(
    state: &mut TrainState,
    final_loss: f64,
    decay: f32,
) -> Result<(f32, f32), TrainerError> {
    if !final_loss.is_finite() {
        return Err(TrainerError::NonFiniteLoss { value: final_loss });
    }
    let reward = (-final_loss) as f32;
    let advantage = ema_advantage(&mut state.baseline, decay, reward);
    Ok((reward, advantage))
}

/// Advantage against a running baseline, then the baseline's EMA step.
pub(crate) fn ema_advantage(baseline: &mut f32, decay: f32, reward: f32) -> f32 {
    let advantage = reward - *baseline;
    *baseline = decay * *baseline + (1.0 - decay) * reward;
    advantage
}

/// Runs the single backward pass that merges both training signals.
///
/// The pass is seeded with gradient 1 on the total reconstruction loss and
/// gradient `-advantage` on each recorded action log-probability, so one
/// sweep descends the reconstruction error while ascending the
/// advantage-weighted log-likelihood of the actions taken. Reward gradients
/// (from the action stages) and reconstruction gradients (from the decode
/// stages) meet inside the recurrent state and flow back together.
///
/// Single-glimpse episodes have no actions and reduce to pure
/// reconstruction backprop.
pub fn backprop_episode(
    trace: &mut EpisodeTrace,
    loss: &EpisodeLoss,
    advantage: f32,
    params: &ParamStore,
) -> Result<Gradients, TrainerError> {
    backprop_episode_filtered(trace, loss, advantage, params, &|_| true)
}

/// [`backprop_episode`], materialising only gradients of parameters where
/// `keep` returns true. Flow through skipped parameters' operations is
/// unchanged.
pub fn backprop_episode_filtered(
    trace: &mut EpisodeTrace,
    loss: &EpisodeLoss,
    advantage: f32,
    params: &ParamStore,
    keep: &dyn Fn(&str) -> bool,
) -> Result<Gradients, TrainerError> {
    let mut roots = vec![(loss.total, 1.0f32)];
    for (i, step) in trace.steps.iter().enumerate().take(trace.steps.len() - 1) {
        let log_prob = step
            .action
            .as_ref()
            .and_then(|a| a.log_prob)
            .ok_or(TrainerError::MissingLogProb { step: i + 1 })?;
        roots.push((log_prob, -advantage));
    }
    Ok(trace.tape.backward_filtered(&roots, params, keep)?)
}
