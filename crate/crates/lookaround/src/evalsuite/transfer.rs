//! The policy-transfer experiment: an action policy learned for completion
//! drives a separately trained recognition model at test time.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{sgd_step, Gradients, ParamStore, Tape, ValueId};
use crate::completer::{act, aggregate, fuse, init_affine, init_encoder_params, sense, ActMode,
                       AggState, ModelConfig};
use crate::gridworld::{apply_action, make_proprioception, ViewGrid, Viewpoint};
use crate::trainer::episode_rng;

use super::evaluate::world_rng;
use super::metrics::{MetricTable, TransferRow};
use super::EvalError;

/// Training settings for the recognition model.
#[derive(Clone, Debug)]
pub struct ClassifierConfig {
    pub lr: f32,
    pub momentum: f32,
    /// Episodes averaged per update.
    pub batch: usize,
    pub updates: usize,
    /// Seeds parameter draws and the per-episode random streams.
    pub seed: u64,
    /// Glimpses per training episode.
    pub episode_len: usize,
}

impl ClassifierConfig {
    pub fn new(seed: u64, episode_len: usize) -> Self {
        Self { lr: 0.01, momentum: 0.9, batch: 8, updates: 1000, seed, episode_len }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(EvalError::BadRequest("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(EvalError::BadRequest("momentum must lie in [0, 1)".into()));
        }
        if self.batch == 0 {
            return Err(EvalError::BadRequest("batch size must be at least 1".into()));
        }
        if self.episode_len == 0 {
            return Err(EvalError::BadRequest("episodes need at least one glimpse".into()));
        }
        Ok(())
    }
}

/// A trained recognition model: the same observation encoder as the
/// completion network, topped with a class-logit head instead of a decoder.
#[derive(Clone, Debug)]
pub struct ModelA {
    pub params: ParamStore,
    /// Sorted distinct labels seen in training; logit `k` means
    /// `label_map[k]`.
    pub label_map: Vec<u32>,
    pub model: ModelConfig,
}

impl ModelA {
    pub fn class_count(&self) -> usize {
        self.label_map.len()
    }

    /// The logit index for a world label, if the classifier knows it.
    pub fn class_index(&self, label: u32) -> Option<usize> {
        self.label_map.binary_search(&label).ok()
    }
}

/// The agent-side state threaded through an episode: where it stands, how
/// it got there, and the recurrent state accumulated so far.
struct Cursor {
    state: Option<AggState>,
    last_action: Option<usize>,
    current: Viewpoint,
}

impl Cursor {
    fn start(at: Viewpoint) -> Self {
        Self { state: None, last_action: None, current: at }
    }
}

/// Observes the cursor's current cell and folds it into the recurrent
/// state, returning the state's tape node.
fn encode_step(
    tape: &mut Tape,
    cursor: &mut Cursor,
    world: &ViewGrid,
    model: &ModelConfig,
    params: &ParamStore,
) -> Result<ValueId, EvalError> {
    let obs = tape.leaf_slice(world.view(cursor.current));
    let proprio =
        make_proprioception(world.dims(), model.motion, cursor.current.elev, cursor.last_action);
    let pro = tape.leaf_slice(proprio.values());
    let s = sense(tape, obs, pro, params)?;
    let f = fuse(tape, s, params)?;
    let state = aggregate(tape, cursor.state.as_ref(), f, params)?;
    cursor.state = Some(state);
    Ok(state.h)
}

fn advance(cursor: &mut Cursor, world: &ViewGrid, model: &ModelConfig, action_index: usize) {
    cursor.last_action = Some(action_index);
    cursor.current =
        apply_action(world.dims(), cursor.current, model.motion.action_at(action_index));
}

fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// One classification episode: mean cross-entropy of the true class over
/// all `episode_len` glimpses, actions drawn uniformly from `rng`.
fn classification_episode(
    world: &ViewGrid,
    start: Viewpoint,
    model: &ModelConfig,
    params: &ParamStore,
    class: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Tape, ValueId), EvalError> {
    let mut tape = Tape::new();
    let mut cursor = Cursor::start(start);
    let mut loss: Option<ValueId> = None;
    for t in 1..=model.episode_len {
        let h = encode_step(&mut tape, &mut cursor, world, model, params)?;
        let logits = tape.affine(h, "cls.w", "cls.b", params)?;
        let probs = tape.softmax(logits)?;
        let lp = tape.log_pick(probs, class)?;
        let term = tape.scale(lp, -1.0 / model.episode_len as f32);
        loss = Some(match loss {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
        if t < model.episode_len {
            let index = rng.random_range(0..model.motion.action_count());
            advance(&mut cursor, world, model, index);
        }
    }
    Ok((tape, loss.expect("episodes have at least one glimpse")))
}

/// Trains a recognition model on labeled worlds under uniformly random
/// exploration.
///
/// The encoder has the completion network's sense/fuse/aggregate layout and
/// sizes (taken from `model`); a fresh affine head maps the recurrent state
/// to one logit per distinct label. Each line of `log`, when given, is
/// `update<TAB>mean-cross-entropy<TAB>seconds`.
pub fn train_classifier_random_policy(
    worlds: &[ViewGrid],
    model: &ModelConfig,
    cfg: &ClassifierConfig,
    mut log: Option<&mut dyn Write>,
) -> Result<ModelA, EvalError> {
    cfg.validate()?;
    let model = ModelConfig { episode_len: cfg.episode_len, ..*model };
    model.validate()?;

    let mut label_map = Vec::new();
    let mut classes = Vec::with_capacity(worlds.len());
    for (w, world) in worlds.iter().enumerate() {
        let label = world.label().ok_or(EvalError::UnlabeledWorld(w))?;
        if let Err(at) = label_map.binary_search(&label) {
            label_map.insert(at, label);
        }
        classes.push(label);
    }
    if label_map.len() < 2 {
        return Err(EvalError::TooFewClasses(label_map.len()));
    }
    let classes: Vec<usize> = classes
        .into_iter()
        .map(|label| label_map.binary_search(&label).expect("just inserted"))
        .collect();

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ParamStore::new();
    init_encoder_params(&model, &mut init_rng, &mut params);
    init_affine(&mut params, &mut init_rng, "cls", label_map.len(), model.agg_code);

    let started = Instant::now();
    let mut counter: u64 = 0;
    for update in 1..=cfg.updates {
        let mut batch = Gradients::new();
        let mut sum_loss = 0.0f64;
        for _ in 0..cfg.batch {
            let mut rng = episode_rng(cfg.seed, counter);
            counter += 1;
            let pick = rng.random_range(0..worlds.len());
            let world = &worlds[pick];
            let dims = world.dims();
            let start = Viewpoint {
                elev: rng.random_range(0..dims.n_elev),
                azim: rng.random_range(0..dims.m_azim),
            };
            let (mut tape, loss) =
                classification_episode(world, start, &model, &params, classes[pick], &mut rng)?;
            let value = tape.scalar_f64(loss);
            if !value.is_finite() {
                return Err(EvalError::NonFiniteLoss { value });
            }
            sum_loss += value;
            let grads = tape.backward(&[(loss, 1.0)], &params)?;
            batch.accumulate(&grads);
        }
        batch.scale(1.0 / cfg.batch as f32);
        sgd_step(&mut params, &batch, cfg.lr, cfg.momentum).map_err(EvalError::Tape)?;
        if let Some(out) = log.as_deref_mut() {
            writeln!(
                out,
                "{}\t{:.6}\t{:.3}",
                update,
                sum_loss / cfg.batch as f64,
                started.elapsed().as_secs_f64(),
            )
            .map_err(|e| EvalError::BadRequest(format!("log write failed: {e}")))?;
        }
    }
    Ok(ModelA { params, label_map, model })
}

/// Who picks the recognition model's next viewpoint at test time.
enum Driver<'a> {
    /// The completion model's act stage, run on its own encoder in
    /// lockstep.
    Policy { params: &'a ParamStore, model: &'a ModelConfig, mode: ActMode },
    /// Uniformly random legal actions.
    Random,
    /// No movement: the first glimpse's logits stand at every t.
    OneView,
}

impl Driver<'_> {
    fn label(&self) -> &'static str {
        match self {
            Driver::Policy { .. } => "transfer",
            Driver::Random => "random-driver",
            Driver::OneView => "1-view",
        }
    }

    fn ordinal(&self) -> u64 {
        match self {
            Driver::Policy { .. } => 1,
            Driver::Random => 2,
            Driver::OneView => 3,
        }
    }
}

/// The recognition model's predicted class index after each glimpse of one
/// episode, the driver choosing every move.
fn drive_world(
    model_a: &ModelA,
    driver: &Driver<'_>,
    world: &ViewGrid,
    start: Viewpoint,
    t_eval: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>, EvalError> {
    let mut tape = Tape::new();
    let mut a_cursor = Cursor::start(start);
    let mut b_cursor = Cursor::start(start);
    let steps = if matches!(driver, Driver::OneView) { 1 } else { t_eval };
    let mut preds = Vec::with_capacity(t_eval);
    for t in 1..=steps {
        let h = encode_step(&mut tape, &mut a_cursor, world, &model_a.model, &model_a.params)?;
        let logits = tape.affine(h, "cls.w", "cls.b", &model_a.params)?;
        preds.push(argmax(tape.value(logits)));
        if t < steps {
            let index = match driver {
                Driver::Policy { params, model, mode } => {
                    // The driving model watches the same views through its
                    // own encoder; only its action choice is used.
                    let b_h = encode_step(&mut tape, &mut b_cursor, world, model, params)?;
                    act(&mut tape, b_h, params, model.motion, (*mode).into(), rng)?.index
                }
                Driver::Random => rng.random_range(0..model_a.model.motion.action_count()),
                Driver::OneView => unreachable!("one-view episodes take no actions"),
            };
            advance(&mut a_cursor, world, &model_a.model, index);
            advance(&mut b_cursor, world, &model_a.model, index);
        }
    }
    while preds.len() < t_eval {
        preds.push(preds[0]);
    }
    Ok(preds)
}

/// Measures how well another model's policy guides the recognition model.
///
/// Three drivers pick the classifier's viewpoints over the same test worlds
/// and the same start cells: the completion model's learned policy
/// (`"transfer"`), uniform random exploration (`"random-driver"`), and
/// standing still (`"1-view"`). Reported per glimpse as the fraction of
/// worlds whose label the classifier ranks first. `mode` selects how the
/// driving policy picks actions.
pub fn run_transfer(
    model_a: &ModelA,
    b_params: &ParamStore,
    b_model: &ModelConfig,
    worlds: &[ViewGrid],
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
    if model_a.model.motion != b_model.motion {
        return Err(EvalError::MotionModelMismatch);
    }
    if model_a.model.dims != b_model.dims {
        return Err(EvalError::DimsMismatch);
    }

    let mut classes = Vec::with_capacity(worlds.len());
    let mut starts = Vec::with_capacity(worlds.len());
    for (w, world) in worlds.iter().enumerate() {
        if world.dims() != model_a.model.dims {
            return Err(EvalError::DimsMismatch);
        }
        let label = world.label().ok_or(EvalError::UnlabeledWorld(w))?;
        let class = model_a
            .class_index(label)
            .ok_or(EvalError::UnknownLabel { world: w, label })?;
        classes.push(class);
        let mut rng = world_rng(seed, 0, 0, w);
        starts.push(Viewpoint {
            elev: rng.random_range(0..model_a.model.dims.n_elev),
            azim: rng.random_range(0..model_a.model.dims.m_azim),
        });
    }

    let digest_a = model_a.params.digest();
    let digest_b = b_params.digest();
    let drivers = [
        Driver::Policy { params: b_params, model: b_model, mode },
        Driver::Random,
        Driver::OneView,
    ];
    let mut rows = Vec::new();
    for driver in &drivers {
        assert_eq!(model_a.params.digest(), digest_a, "classifier changed between drivers");
        assert_eq!(b_params.digest(), digest_b, "driving model changed between drivers");
        let mut hits = vec![0usize; t_eval];
        for (w, world) in worlds.iter().enumerate() {
            let mut rng = world_rng(seed, driver.ordinal(), 0, w);
            let preds = drive_world(model_a, driver, world, starts[w], t_eval, &mut rng)?;
            for (hit, pred) in hits.iter_mut().zip(preds) {
                *hit += usize::from(pred == classes[w]);
            }
        }
        for (i, &hit) in hits.iter().enumerate() {
            rows.push(TransferRow {
                method: driver.label().to_string(),
                t: i + 1,
                accuracy: hit as f64 / worlds.len() as f64,
            });
        }
    }
    Ok(MetricTable::Transfer(rows))
}
