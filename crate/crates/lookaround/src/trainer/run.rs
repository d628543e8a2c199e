//! The two training phases, episode sampling, and checkpoints.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{
    load_param_store, save_param_store, sgd_step, Gradients, TensorValue,
};
use crate::completer::{init_params, rollout, ActMode, ModelConfig, RolloutPolicy};
use crate::gridworld::{ViewGrid, Viewpoint};

use super::loss::{backprop_episode_filtered, compute_reward, episode_loss};
use super::{TrainConfig, TrainState, TrainerError};

/// Largest counter a checkpoint can hold exactly (stored as an f32 value).
const MAX_STORED_COUNTER: u64 = 1 << 24;

/// The RNG for episode number `counter` under `seed`.
///
/// Stream 0 is reserved for parameter initialisation, so episode `n` runs
/// on stream `n + 1`. Everything random about an episode — which world,
/// where it starts, which actions get sampled — draws from this one stream,
/// which is what lets a restored [`TrainState::episode_counter`] resume a
/// run mid-way, bit for bit.
pub(crate) fn episode_rng(seed: u64, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(counter + 1);
    rng
}

/// Phase 1: teach the network to complete grids from one glimpse.
///
/// Initialises fresh parameters from the config seed and trains every
/// module with single-glimpse episodes (no actions happen, so no policy
/// term exists yet). Each line of `log`, when given, is
/// `update<TAB>mean-loss<TAB>mean-final-loss-x1000<TAB>baseline<TAB>seconds`.
pub fn pretrain_t1(
    dataset: &[ViewGrid],
    model: &ModelConfig,
    cfg: &TrainConfig,
    log: Option<&mut dyn Write>,
) -> Result<TrainState, TrainerError> {
    cfg.validate()?;
    let single = ModelConfig { episode_len: 1, ..*model };
    single.validate()?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = TrainState {
        params: init_params(&single, &mut init_rng),
        baseline: 0.0,
        updates_done: 0,
        episode_counter: 0,
    };
    // The freeze set applies only to the policy phase; pretraining
    // always trains the entire network.
    run_phase(dataset, &single, cfg, &mut state, cfg.pretrain_updates, &[], false, log)?;
    Ok(state)
}

/// Phase 2: full-length episodes with the policy-gradient term.
///
/// Continues from a pretrained state. Modules in [`TrainConfig::freeze`]
/// receive no updates: their gradients are pinned to zero and their
/// momentum buffers are cleared up front, so their bytes never change.
pub fn train_policy(
    dataset: &[ViewGrid],
    model: &ModelConfig,
    cfg: &TrainConfig,
    mut state: TrainState,
    log: Option<&mut dyn Write>,
) -> Result<TrainState, TrainerError> {
    cfg.validate()?;
    let full = ModelConfig { episode_len: cfg.episode_len, ..*model };
    full.validate()?;
    let frozen: Vec<String> = state
        .params
        .names()
        .filter(|name| is_frozen(name, &cfg.freeze))
        .map(String::from)
        .collect();
    for name in &frozen {
        state.params.zero_velocity(name);
    }
    run_phase(dataset, &full, cfg, &mut state, cfg.updates, &cfg.freeze, true, log)?;
    Ok(state)
}

fn is_frozen(name: &str, freeze: &[String]) -> bool {
    freeze.iter().any(|module| {
        name.len() > module.len()
            && name.as_bytes()[module.len()] == b'.'
            && name.starts_with(module.as_str())
    })
}

#[allow(clippy::too_many_arguments)]
fn run_phase(
    dataset: &[ViewGrid],
    model: &ModelConfig,
    cfg: &TrainConfig,
    state: &mut TrainState,
    updates: usize,
    freeze: &[String],
    with_policy_term: bool,
    mut log: Option<&mut dyn Write>,
) -> Result<(), TrainerError> {
    if dataset.is_empty() {
        return Err(TrainerError::EmptyDataset);
    }
    let keep = |name: &str| !is_frozen(name, freeze);
    let started = Instant::now();
    for _ in 0..updates {
        let mut batch = Gradients::new();
        let mut sum_total = 0.0f64;
        let mut sum_final = 0.0f64;
        for _ in 0..cfg.batch {
            let mut rng = episode_rng(cfg.seed, state.episode_counter);
            state.episode_counter += 1;
            let world = &dataset[rng.random_range(0..dataset.len())];
            let dims = world.dims();
            let start = Viewpoint {
                elev: rng.random_range(0..dims.n_elev),
                azim: rng.random_range(0..dims.m_azim),
            };
            let mut trace = rollout(
                world,
                start,
                model,
                &state.params,
                RolloutPolicy::Learned(ActMode::Sample),
                &mut rng,
            )?;
            let loss = episode_loss(&mut trace, world)?;
            let total = trace.tape.scalar_f64(loss.total);
            let final_step = trace.tape.scalar_f64(loss.final_step);
            if !total.is_finite() {
                return Err(TrainerError::NonFiniteLoss { value: total });
            }
            sum_total += total;
            sum_final += final_step;
            let advantage = if with_policy_term {
                compute_reward(state, final_step, cfg.baseline_decay)?.1
            } else {
                0.0
            };
            let grads =
                backprop_episode_filtered(&mut trace, &loss, advantage, &state.params, &keep)?;
            batch.accumulate(&grads);
        }
        batch.scale(1.0 / cfg.batch as f32);
        // Frozen parameters — and any the episode never exercised, like the
        // action stage during single-glimpse pretraining — step by exactly
        // zero rather than being silently skipped.
        for (name, value) in state.params.iter() {
            batch.ensure_zero(name, value.shape());
        }
        sgd_step(&mut state.params, &batch, cfg.lr, cfg.momentum)?;
        state.updates_done += 1;
        if let Some(out) = log.as_deref_mut() {
            let n = cfg.batch as f64;
            writeln!(
                out,
                "{}\t{:.6}\t{:.4}\t{:.6}\t{:.3}",
                state.updates_done,
                sum_total / n,
                sum_final / n * 1000.0,
                state.baseline,
                started.elapsed().as_secs_f64(),
            )?;
        }
    }
    Ok(())
}

/// Writes a training state as a checkpoint.
///
/// The baseline and both counters ride along as the reserved scalar entries
/// `__baseline`, `__updates`, and `__episodes`, so a reloaded state resumes
/// exactly where this one stopped.
pub fn save_checkpoint(state: &TrainState, path: impl AsRef<Path>) -> Result<(), TrainerError> {
    let mut store = state.params.clone();
    store.insert("__baseline", TensorValue::scalar(state.baseline));
    store.insert("__updates", counter_value("__updates", state.updates_done)?);
    store.insert("__episodes", counter_value("__episodes", state.episode_counter)?);
    save_param_store(&store, path)?;
    Ok(())
}

fn counter_value(name: &str, counter: u64) -> Result<TensorValue, TrainerError> {
    if counter > MAX_STORED_COUNTER {
        return Err(TrainerError::BadConfig(format!(
            "{name} counter {counter} exceeds what a checkpoint stores exactly"
        )));
    }
    Ok(TensorValue::scalar(counter as f32))
}

/// Reads a checkpoint back into a training state.
///
/// `__baseline` is required; the counters default to zero when absent, so a
/// parameter store written without them still loads (as a fresh run).
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainState, TrainerError> {
    let mut params = load_param_store(path)?;
    let baseline = take_scalar(&mut params, "__baseline")?.ok_or(TrainerError::MissingBaseline)?;
    let updates_done = take_scalar(&mut params, "__updates")?.unwrap_or(0.0) as u64;
    let episode_counter = take_scalar(&mut params, "__episodes")?.unwrap_or(0.0) as u64;
    Ok(TrainState { params, baseline, updates_done, episode_counter })
}

fn take_scalar(
    params: &mut crate::autodiff::ParamStore,
    name: &str,
) -> Result<Option<f32>, TrainerError> {
    match params.remove(name) {
        None => Ok(None),
        Some(value) if value.len() == 1 => Ok(Some(value.data()[0])),
        Some(value) => Err(TrainerError::BadConfig(format!(
            "checkpoint entry {name} should be a scalar, has shape {:?}",
            value.shape()
        ))),
    }
}
