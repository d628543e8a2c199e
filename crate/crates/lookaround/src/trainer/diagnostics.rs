//! Estimator diagnostics: the policy gradient by brute force and by
//! sampling, for settings small enough to enumerate.
//!
//! The score-function estimator used in training is unbiased but noisy;
//! these two functions let a test pin it against ground truth. On a tiny
//! grid the expectation over episodes is a finite sum — every start cell
//! times every action sequence — so the exact gradient of the expected
//! final reconstruction error is computable, and the sampled estimate must
//! converge to it.

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Gradients, ParamStore, TensorValue};
use crate::completer::{rollout, ActMode, ModelConfig, RolloutPolicy};
use crate::gridworld::{ViewGrid, Viewpoint};

use super::loss::{backprop_episode_filtered, ema_advantage, episode_loss};
use super::run::episode_rng;
use super::TrainerError;

/// Most forced rollouts [`enumerated_act_gradient`] will run.
const MAX_BRANCHES: u64 = 1 << 20;

fn action_params_only(name: &str) -> bool {
    name.starts_with("act.")
}

/// Sums per-parameter gradients in f64 so hundreds of thousands of small
/// f32 contributions don't drown each other.
struct GradientSum {
    sums: IndexMap<String, (Vec<usize>, Vec<f64>)>,
}

impl GradientSum {
    fn new() -> Self {
        GradientSum { sums: IndexMap::new() }
    }

    fn add(&mut self, grads: &Gradients) {
        for (name, value) in grads.iter() {
            let entry = self
                .sums
                .entry(name.to_string())
                .or_insert_with(|| (value.shape().to_vec(), vec![0.0; value.len()]));
            for (acc, &g) in entry.1.iter_mut().zip(value.data()) {
                *acc += f64::from(g);
            }
        }
    }

    fn into_gradients(self, divisor: f64) -> Gradients {
        let mut out = Gradients::new();
        for (name, (shape, sums)) in self.sums {
            let data = sums.into_iter().map(|v| (v / divisor) as f32).collect();
            out.add(&name, TensorValue::new(shape, data));
        }
        out
    }
}

/// The exact gradient, with respect to the action-stage parameters, of the
/// expected final reconstruction error on `world`.
///
/// Enumerates every start cell (uniformly weighted) and every action
/// sequence, replaying each branch with forced actions. A branch starting
/// at `s` with actions `a_1..a_{T-1}` occurs with probability
/// `prod_t pi(a_t)`, and only that probability depends on the action
/// parameters, so the branch contributes its probability times its final
/// error through the gradient of its log-probability. Errors out above
/// 2^20 branches — this is a diagnostic for enumerable settings, not a
/// trainer.
pub fn enumerated_act_gradient(
    world: &ViewGrid,
    model: &ModelConfig,
    params: &ParamStore,
) -> Result<Gradients, TrainerError> {
    model.validate()?;
    let dims = world.dims();
    let n_actions = model.motion.action_count() as u64;
    let script_len = model.episode_len - 1;
    let scripts = n_actions.pow(script_len as u32);
    let starts = dims.cell_count() as u64;
    if starts * scripts > MAX_BRANCHES {
        return Err(TrainerError::BadConfig(format!(
            "{} branches is too many to enumerate",
            starts * scripts
        )));
    }

    let start_weight = 1.0 / starts as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(0); // unused: every action is forced
    let mut sum = GradientSum::new();
    let mut script = vec![0usize; script_len];
    for elev in 0..dims.n_elev {
        for azim in 0..dims.m_azim {
            let start = Viewpoint { elev, azim };
            for code in 0..scripts {
                let mut rest = code;
                for slot in script.iter_mut() {
                    *slot = (rest % n_actions) as usize;
                    rest /= n_actions;
                }
                let mut trace = rollout(
                    world,
                    start,
                    model,
                    params,
                    RolloutPolicy::Scripted(&script),
                    &mut rng,
                )?;
                let loss = episode_loss(&mut trace, world)?;
                let final_err = trace.tape.scalar_f64(loss.final_step);

                let records: Vec<_> = trace
                    .steps
                    .iter()
                    .take(script_len)
                    .map(|step| step.action.as_ref().expect("scripted steps act"))
                    .collect();
                let branch_prob: f64 = records
                    .iter()
                    .map(|r| f64::from(r.probs.as_ref().expect("scripted steps record probs")[r.index]))
                    .product();
                let seed = (start_weight * branch_prob * final_err) as f32;
                let roots: Vec<_> = records
                    .iter()
                    .map(|r| (r.log_prob.expect("scripted steps record log-probs"), seed))
                    .collect();
                if roots.is_empty() {
                    continue; // single-glimpse episodes have no policy gradient
                }
                let grads = trace.tape.backward_filtered(&roots, params, &action_params_only)?;
                sum.add(&grads);
            }
        }
    }
    Ok(sum.into_gradients(1.0))
}

/// The sampled counterpart of [`enumerated_act_gradient`]: the mean
/// action-stage gradient over `episodes` ordinary training episodes on
/// `world` (uniform random start, sampled actions, live running baseline).
///
/// By the score-function identity its expectation equals the enumerated
/// gradient, so the two must agree ever more closely as `episodes` grows.
pub fn sampled_act_gradient(
    world: &ViewGrid,
    model: &ModelConfig,
    params: &ParamStore,
    episodes: u64,
    seed: u64,
    baseline_decay: f32,
) -> Result<Gradients, TrainerError> {
    model.validate()?;
    if episodes == 0 {
        return Err(TrainerError::BadConfig("need at least one episode".into()));
    }
    let dims = world.dims();
    let mut baseline = 0.0f32;
    let mut sum = GradientSum::new();
    for episode in 0..episodes {
        let mut rng = episode_rng(seed, episode);
        let start = Viewpoint {
            elev: rng.random_range(0..dims.n_elev),
            azim: rng.random_range(0..dims.m_azim),
        };
        let mut trace = rollout(
            world,
            start,
            model,
            params,
            RolloutPolicy::Learned(ActMode::Sample),
            &mut rng,
        )?;
        let loss = episode_loss(&mut trace, world)?;
        let final_err = trace.tape.scalar_f64(loss.final_step);
        if !final_err.is_finite() {
            return Err(TrainerError::NonFiniteLoss { value: final_err });
        }
        let advantage = ema_advantage(&mut baseline, baseline_decay, (-final_err) as f32);
        let grads = backprop_episode_filtered(
            &mut trace,
            &loss,
            advantage,
            params,
            &action_params_only,
        )?;
        sum.add(&grads);
    }
    Ok(sum.into_gradients(episodes as f64))
}
