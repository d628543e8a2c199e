//! Side-by-side policy evaluation on a shared test set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::ParamStore;
use crate::completer::{rollout, ActMode, ModelConfig, RolloutPolicy};
use crate::gridworld::{Action, ViewGrid, Viewpoint};

use super::metrics::{CompletionRow, MetricTable};
use super::policies::{large_action_candidates, FixedActionPolicy, PeekSaliencyPolicy,
                      RandomPolicy};
use super::EvalError;

/// Which view-selection rule drives the episodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicySpec {
    /// The trained act stage ("ours").
    Learned,
    /// Uniform over legal actions.
    Random,
    /// One fixed perimeter action every step; `None` means sweep all
    /// perimeter candidates and report the one that performs best on this
    /// test set.
    LargeAction { action: Option<Action> },
    /// Privileged edge-energy peeking.
    PeekSaliency,
    /// No exploration: the first glimpse's prediction, reported at every t.
    OneView,
}

impl PolicySpec {
    /// The method name used in tables.
    pub fn label(&self) -> &'static str {
        match self {
            PolicySpec::Learned => "ours",
            PolicySpec::Random => "random",
            PolicySpec::LargeAction { .. } => "large-action",
            PolicySpec::PeekSaliency => "peek-saliency",
            PolicySpec::OneView => "1-view",
        }
    }

    fn ordinal(&self) -> u64 {
        match self {
            PolicySpec::Learned => 1,
            PolicySpec::Random => 2,
            PolicySpec::LargeAction { .. } => 3,
            PolicySpec::PeekSaliency => 4,
            PolicySpec::OneView => 5,
        }
    }
}

/// RNG stream layout: policy ordinal, a sub-run (perimeter candidate), and
/// the world index. Ordinal 0 carries the shared start cells, so every
/// policy sees the same starts but has private randomness.
fn stream(ordinal: u64, sub: u64, world: usize) -> u64 {
    (ordinal << 56) | (sub << 32) | world as u64
}

pub(super) fn world_rng(seed: u64, ordinal: u64, sub: u64, world: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream(ordinal, sub, world));
    rng
}

/// Runs every requested policy over the test worlds and tabulates mean
/// reconstruction error per glimpse.
///
/// All policies share the evaluated parameters (checked by digest before
/// each run) and the same per-world start cells; only action selection and
/// each policy's private random stream differ. The single-glimpse baseline
/// is always evaluated — improvement percentages are measured against it —
/// and appears as its own row even when not requested. `mode` selects how
/// the learned policy picks actions (sampling or argmax).
pub fn evaluate_policies(
    specs: &[PolicySpec],
    worlds: &[ViewGrid],
    params: &ParamStore,
    model: &ModelConfig,
    t_eval: usize,
    mode: ActMode,
    seed: u64,
) -> Result<MetricTable, EvalError> {
    if worlds.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    if t_eval == 0 {
        return Err(EvalError::BadRequest("evaluation needs at least one glimpse".into()));
    }
    for (i, a) in specs.iter().enumerate() {
        if specs[..i].iter().any(|b| a.label() == b.label()) {
            return Err(EvalError::BadRequest(format!("policy {:?} requested twice", a.label())));
        }
        if let PolicySpec::LargeAction { action: Some(action) } = a {
            if !large_action_candidates(model.motion).contains(action) {
                return Err(EvalError::NotPerimeter(*action));
            }
        }
    }

    let digest = params.digest();
    let starts: Vec<Viewpoint> = (0..worlds.len())
        .map(|w| {
            let mut rng = world_rng(seed, 0, 0, w);
            let dims = worlds[w].dims();
            Viewpoint {
                elev: rng.random_range(0..dims.n_elev),
                azim: rng.random_range(0..dims.m_azim),
            }
        })
        .collect();

    let run = |spec: &PolicySpec, sub: u64, action: Option<Action>| -> Result<Vec<f64>, EvalError> {
        assert_eq!(params.digest(), digest, "parameters changed between policy runs");
        let episode_len = if matches!(spec, PolicySpec::OneView) { 1 } else { t_eval };
        let cfg = ModelConfig { episode_len, ..*model };
        let mut sums = vec![0.0f64; t_eval];
        for (w, world) in worlds.iter().enumerate() {
            let mut rng = world_rng(seed, spec.ordinal(), sub, w);
            let trace = match spec {
                PolicySpec::Learned => rollout(
                    world,
                    starts[w],
                    &cfg,
                    params,
                    RolloutPolicy::Learned(mode),
                    &mut rng,
                )?,
                PolicySpec::Random => {
                    let mut policy = RandomPolicy::new(rng);
                    let mut unused = ChaCha8Rng::seed_from_u64(0);
                    rollout(
                        world,
                        starts[w],
                        &cfg,
                        params,
                        RolloutPolicy::External(&mut policy),
                        &mut unused,
                    )?
                }
                PolicySpec::LargeAction { .. } => {
                    let mut policy =
                        FixedActionPolicy { action: action.expect("candidate supplied") };
                    let mut unused = ChaCha8Rng::seed_from_u64(0);
                    rollout(
                        world,
                        starts[w],
                        &cfg,
                        params,
                        RolloutPolicy::External(&mut policy),
                        &mut unused,
                    )?
                }
                PolicySpec::PeekSaliency => {
                    let mut policy = PeekSaliencyPolicy;
                    let mut unused = ChaCha8Rng::seed_from_u64(0);
                    rollout(
                        world,
                        starts[w],
                        &cfg,
                        params,
                        RolloutPolicy::External(&mut policy),
                        &mut unused,
                    )?
                }
                PolicySpec::OneView => rollout(
                    world,
                    starts[w],
                    &cfg,
                    params,
                    RolloutPolicy::Learned(ActMode::Argmax),
                    &mut rng,
                )?,
            };
            match spec {
                // The first prediction stands in at every later t.
                PolicySpec::OneView => {
                    let loss = trace.steps[0].loss;
                    for s in sums.iter_mut() {
                        *s += loss;
                    }
                }
                _ => {
                    for (s, step) in sums.iter_mut().zip(&trace.steps) {
                        *s += step.loss;
                    }
                }
            }
        }
        Ok(sums.into_iter().map(|s| s / worlds.len() as f64).collect())
    };

    let one_view_means = run(&PolicySpec::OneView, 0, None)?;
    let improvement = |base: f64, mse: f64| -> f64 {
        if base == 0.0 {
            0.0
        } else {
            100.0 * (base - mse) / base
        }
    };

    let mut rows = Vec::new();
    let mut emit = |label: &str, means: &[f64]| {
        for (i, &mse) in means.iter().enumerate() {
            rows.push(CompletionRow {
                method: label.to_string(),
                t: i + 1,
                mse_x1000: mse * 1000.0,
                improvement_pct: improvement(one_view_means[i], mse),
            });
        }
    };

    for spec in specs {
        let means = match spec {
            PolicySpec::OneView => one_view_means.clone(),
            PolicySpec::LargeAction { action: Some(a) } => run(spec, 0, Some(*a))?,
            PolicySpec::LargeAction { action: None } => {
                // Sweep the perimeter; keep the candidate that ends best on
                // this test set (ties to the earlier candidate).
                let mut best: Option<Vec<f64>> = None;
                for (ci, cand) in large_action_candidates(model.motion).iter().enumerate() {
                    let means = run(spec, ci as u64 + 1, Some(*cand))?;
                    let better = best
                        .as_ref()
                        .is_none_or(|b| means[t_eval - 1] < b[t_eval - 1]);
                    if better {
                        best = Some(means);
                    }
                }
                best.expect("perimeter is never empty")
            }
            _ => run(spec, 0, None)?,
        };
        emit(spec.label(), &means);
    }
    if !specs.iter().any(|s| matches!(s, PolicySpec::OneView)) {
        emit(PolicySpec::OneView.label(), &one_view_means);
    }
    Ok(MetricTable::Completion(rows))
}
