//! Learning-free exploration baselines.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::completer::{PolicyCtx, ViewPolicy};
use crate::gridworld::{apply_action, Action, MotionModel};

/// Edge energy of one view: the mean absolute horizontal plus vertical
/// finite difference over its pixels.
///
/// The view is `height x width x channels`, row-major. Differences are
/// taken per channel between horizontally and vertically adjacent pixels
/// and averaged over all such pairs, so the score is invariant to constant
/// intensity shifts and scales with edge content. Views too small to have
/// any adjacent pair score 0.
pub fn saliency_score(view: &[f32], height: usize, width: usize, channels: usize) -> f64 {
    assert_eq!(view.len(), height * width * channels, "view shape mismatch");
    let pairs = height * width.saturating_sub(1) + height.saturating_sub(1) * width;
    if pairs == 0 || channels == 0 {
        return 0.0;
    }
    let at = |r: usize, c: usize, ch: usize| f64::from(view[(r * width + c) * channels + ch]);
    let mut total = 0.0;
    for r in 0..height {
        for c in 0..width {
            for ch in 0..channels {
                if c + 1 < width {
                    total += (at(r, c + 1, ch) - at(r, c, ch)).abs();
                }
                if r + 1 < height {
                    total += (at(r + 1, c, ch) - at(r, c, ch)).abs();
                }
            }
        }
    }
    total / (pairs * channels) as f64
}

/// All actions on the perimeter of the motion neighborhood: those moving by
/// the full radius in elevation or azimuth. The degenerate 1x1 neighborhood
/// yields just the stay-put action.
pub fn large_action_candidates(motion: MotionModel) -> Vec<Action> {
    motion
        .legal_actions()
        .into_iter()
        .filter(|a| {
            a.d_elev.unsigned_abs() as usize == motion.e_radius
                || a.d_azim.unsigned_abs() as usize == motion.a_radius
        })
        .collect()
}

/// Picks uniformly among all legal actions.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(rng: ChaCha8Rng) -> Self {
        RandomPolicy { rng }
    }
}

impl ViewPolicy for RandomPolicy {
    fn select_action(&mut self, ctx: &PolicyCtx<'_>) -> Action {
        let index = self.rng.random_range(0..ctx.motion.action_count());
        ctx.motion.action_at(index)
    }
}

/// Repeats one fixed action every step.
pub struct FixedActionPolicy {
    pub action: Action,
}

impl ViewPolicy for FixedActionPolicy {
    fn select_action(&mut self, _ctx: &PolicyCtx<'_>) -> Action {
        self.action
    }
}

/// A privileged baseline: peeks at the true views within reach and moves to
/// the unvisited one with the highest [`saliency_score`].
///
/// Ties break toward the earlier action in canonical order. When every
/// reachable cell has been visited already, it settles for the most salient
/// reachable cell regardless.
pub struct PeekSaliencyPolicy;

impl PeekSaliencyPolicy {
    fn best_reachable(&self, ctx: &PolicyCtx<'_>, skip_visited: bool) -> Option<Action> {
        let dims = ctx.world.dims();
        let mut best: Option<(f64, Action)> = None;
        for action in ctx.motion.legal_actions() {
            let cell = apply_action(dims, ctx.current, action);
            if skip_visited && ctx.visited.contains(&cell) {
                continue;
            }
            let score =
                saliency_score(ctx.world.view(cell), dims.view_h, dims.view_w, dims.channels);
            if best.is_none_or(|(top, _)| score > top) {
                best = Some((score, action));
            }
        }
        best.map(|(_, action)| action)
    }
}

impl ViewPolicy for PeekSaliencyPolicy {
    fn select_action(&mut self, ctx: &PolicyCtx<'_>) -> Action {
        self.best_reachable(ctx, true)
            .or_else(|| self.best_reachable(ctx, false))
            .expect("the motion neighborhood is never empty")
    }
}
