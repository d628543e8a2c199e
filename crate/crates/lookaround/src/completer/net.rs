//! The five network stages as tape operations.

use std::collections::BTreeMap;

use rand::Rng;

use crate::autodiff::{categorical_sample, lstm_step, Activation, ParamStore, Tape, TapeError,
                      ValueId};
use crate::gridworld::{Action, GridDims, MotionModel, Viewpoint};

use super::CompleterError;

/// Encodes one observation: the view and the proprioception vector pass
/// through separate affine+tanh stacks and the codes are concatenated.
pub fn sense(
    tape: &mut Tape,
    view: ValueId,
    proprio: ValueId,
    params: &ParamStore,
) -> Result<ValueId, TapeError> {
    let v = tape.affine(view, "sense.view.w", "sense.view.b", params)?;
    let v = tape.activation(v, Activation::Tanh);
    let p = tape.affine(proprio, "sense.proprio.w", "sense.proprio.b", params)?;
    let p = tape.activation(p, Activation::Tanh);
    tape.concat(v, p)
}

/// Mixes a sense code into the fused per-step code.
pub fn fuse(tape: &mut Tape, sensed: ValueId, params: &ParamStore) -> Result<ValueId, TapeError> {
    let f = tape.affine(sensed, "fuse.w", "fuse.b", params)?;
    Ok(tape.activation(f, Activation::Tanh))
}

/// Recurrent state of the aggregate stage.
#[derive(Clone, Copy, Debug)]
pub struct AggState {
    pub h: ValueId,
    pub c: ValueId,
}

/// Folds a fused code into the recurrent state; `None` starts from zeros.
pub fn aggregate(
    tape: &mut Tape,
    prev: Option<&AggState>,
    fused: ValueId,
    params: &ParamStore,
) -> Result<AggState, TapeError> {
    let (h, c) = match prev {
        Some(state) => (state.h, state.c),
        None => {
            let size = params
                .get("agg.i.b")
                .ok_or_else(|| TapeError::UnknownParam("agg.i.b".to_string()))?
                .len();
            let h = tape.leaf_slice(&vec![0.0; size]);
            let c = tape.leaf_slice(&vec![0.0; size]);
            (h, c)
        }
    };
    let (h, c) = lstm_step(tape, fused, h, c, params, "agg")?;
    Ok(AggState { h, c })
}

/// A decoded full-grid prediction.
#[derive(Debug)]
pub struct DecodeOut {
    /// The predicted grid (agent frame, flat layout), observed views pasted.
    pub grid: ValueId,
    /// Which cells were pasted from observations, row-major per cell.
    pub pasted_cells: Vec<bool>,
}

/// Expands the recurrent state to a full grid guess and pastes every seen
/// view over its cell.
///
/// `seen` pairs each observed cell (in the agent frame) with the tape node
/// holding its observation. A cell observed twice must carry bit-identical
/// pixels (true for revisits within one world) — anything else is a
/// [`CompleterError::ConflictingRevisit`].
pub fn decode(
    tape: &mut Tape,
    agg_h: ValueId,
    seen: &[(Viewpoint, ValueId)],
    params: &ParamStore,
    dims: GridDims,
) -> Result<DecodeOut, CompleterError> {
    let hidden = tape.affine(agg_h, "decode.hidden.w", "decode.hidden.b", params)?;
    let hidden = tape.activation(hidden, Activation::Tanh);
    let out = tape.affine(hidden, "decode.out.w", "decode.out.b", params)?;
    let guess = tape.activation(out, Activation::Sigmoid);

    // Deduplicate revisited cells, keeping the first observation and
    // requiring any later one to match it exactly.
    let mut by_cell: BTreeMap<usize, (Viewpoint, ValueId)> = BTreeMap::new();
    for &(vp, obs) in seen {
        let cell = dims.cell_index(vp);
        match by_cell.get(&cell) {
            None => {
                by_cell.insert(cell, (vp, obs));
            }
            Some(&(_, first)) => {
                let same = tape
                    .value(first)
                    .iter()
                    .zip(tape.value(obs))
                    .all(|(a, b)| a.to_bits() == b.to_bits());
                if !same {
                    return Err(CompleterError::ConflictingRevisit(vp));
                }
            }
        }
    }
    let spans: Vec<(usize, ValueId)> = by_cell
        .values()
        .map(|&(vp, obs)| (dims.cell_offset(vp), obs))
        .collect();
    let grid = tape.paste(guess, &spans)?;

    let mut pasted_cells = vec![false; dims.cell_count()];
    for &cell in by_cell.keys() {
        pasted_cells[cell] = true;
    }
    Ok(DecodeOut { grid, pasted_cells })
}

/// How [`act`] turns the action distribution into a choice.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActMode {
    /// Draw from the distribution (training and stochastic evaluation).
    Sample,
    /// Take the most probable action, first index on ties.
    Argmax,
}

/// Selection rule for [`act`], extending [`ActMode`] with a forced choice
/// used by tests and enumeration oracles: the distribution is still
/// computed and recorded, but the given action is taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActSelect {
    Sample,
    Argmax,
    Forced(usize),
}

impl From<ActMode> for ActSelect {
    fn from(mode: ActMode) -> Self {
        match mode {
            ActMode::Sample => ActSelect::Sample,
            ActMode::Argmax => ActSelect::Argmax,
        }
    }
}

/// One chosen action with its recorded log-probability.
#[derive(Clone, Debug)]
pub struct ActOutcome {
    /// Canonical index of the action within [`MotionModel::legal_actions`].
    pub index: usize,
    pub action: Action,
    /// Tape node holding `ln pi(action)`.
    pub log_prob: ValueId,
    /// The full action distribution at selection time.
    pub probs: Vec<f32>,
}

/// Maps the recurrent state to a distribution over legal actions and picks
/// one.
pub fn act(
    tape: &mut Tape,
    agg_h: ValueId,
    params: &ParamStore,
    motion: MotionModel,
    select: ActSelect,
    rng: &mut impl Rng,
) -> Result<ActOutcome, TapeError> {
    let hidden = tape.affine(agg_h, "act.hidden.w", "act.hidden.b", params)?;
    let hidden = tape.activation(hidden, Activation::Tanh);
    let logits = tape.affine(hidden, "act.out.w", "act.out.b", params)?;
    let probs_node = tape.softmax(logits)?;
    let probs = tape.value(probs_node).to_vec();

    let (index, log_prob) = match select {
        ActSelect::Sample => categorical_sample(tape, probs_node, rng)?,
        ActSelect::Argmax => {
            let mut best = 0;
            for (k, &p) in probs.iter().enumerate() {
                if p > probs[best] {
                    best = k;
                }
            }
            (best, tape.log_pick(probs_node, best)?)
        }
        ActSelect::Forced(index) => (index, tape.log_pick(probs_node, index)?),
    };
    Ok(ActOutcome { index, action: motion.action_at(index), log_prob, probs })
}
