//! Model shape and parameter initialization.

use rand::Rng;

use crate::autodiff::{ParamStore, TensorValue};
use crate::gridworld::{GridDims, MotionModel};

use super::CompleterError;

/// Sizes of every stage of the completion network.
///
/// The defaults from [`ModelConfig::desk`] suit desk-scale grids; every code
/// size is independent, so tests shrink them freely.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub dims: GridDims,
    pub motion: MotionModel,
    /// Code size of the view branch of the sense stage.
    pub view_code: usize,
    /// Code size of the proprioception branch of the sense stage.
    pub proprio_code: usize,
    /// Output size of the fuse stage.
    pub fuse_code: usize,
    /// Recurrent state size of the aggregate stage.
    pub agg_code: usize,
    /// Hidden layer size of the decode stage.
    pub decode_hidden: usize,
    /// Hidden layer size of the act stage.
    pub act_hidden: usize,
    /// Views per episode (T). The agent takes `T - 1` actions.
    pub episode_len: usize,
}

impl ModelConfig {
    /// Desk-scale defaults: a 96-value sense code (64 view + 32 proprio),
    /// 128-value fused code, and a 256-value recurrent state.
    pub fn desk(dims: GridDims, motion: MotionModel, episode_len: usize) -> Self {
        Self {
            dims,
            motion,
            view_code: 64,
            proprio_code: 32,
            fuse_code: 128,
            agg_code: 256,
            decode_hidden: 128,
            act_hidden: 64,
            episode_len,
        }
    }

    pub fn validate(&self) -> Result<(), CompleterError> {
        self.dims.validate().map_err(CompleterError::Grid)?;
        if self.episode_len == 0 {
            return Err(CompleterError::BadConfig("episode length must be at least 1".into()));
        }
        let codes = [
            self.view_code,
            self.proprio_code,
            self.fuse_code,
            self.agg_code,
            self.decode_hidden,
            self.act_hidden,
        ];
        if codes.contains(&0) {
            return Err(CompleterError::BadConfig("all code sizes must be positive".into()));
        }
        Ok(())
    }

    /// Length of the proprioception vector: elevation one-hot plus motion
    /// one-hot.
    pub fn proprio_len(&self) -> usize {
        self.dims.n_elev + self.motion.action_count()
    }

    /// Length of the concatenated sense code.
    pub fn sense_code(&self) -> usize {
        self.view_code + self.proprio_code
    }
}

/// Initializes every parameter of the completion network.
///
/// Weights draw uniformly from `±sqrt(6 / (fan_in + fan_out))`; biases start
/// at zero except the aggregate forget gate, which starts at one so early
/// training does not wash out the recurrent state. Parameters are inserted
/// (and therefore drawn) in a fixed order, so one seed fully determines the
/// model.
pub fn init_params(cfg: &ModelConfig, rng: &mut impl Rng) -> ParamStore {
    let mut store = ParamStore::new();
    init_encoder_params(cfg, rng, &mut store);
    init_affine(&mut store, rng, "decode.hidden", cfg.decode_hidden, cfg.agg_code);
    init_affine(&mut store, rng, "decode.out", cfg.dims.grid_len(), cfg.decode_hidden);
    init_affine(&mut store, rng, "act.hidden", cfg.act_hidden, cfg.agg_code);
    init_affine(&mut store, rng, "act.out", cfg.motion.action_count(), cfg.act_hidden);
    store
}

/// Initializes the shared observation encoder (sense, fuse, aggregate) into
/// `store`. Separated out so the transfer protocol can build an encoder plus
/// classifier head with the same layout as the completion model.
pub(crate) fn init_encoder_params(cfg: &ModelConfig, rng: &mut impl Rng, store: &mut ParamStore) {
    init_affine(store, rng, "sense.view", cfg.view_code, cfg.dims.view_len());
    init_affine(store, rng, "sense.proprio", cfg.proprio_code, cfg.proprio_len());
    init_affine(store, rng, "fuse", cfg.fuse_code, cfg.sense_code());
    for gate in ["i", "f", "g", "o"] {
        init_affine(store, rng, &format!("agg.{gate}"), cfg.agg_code, cfg.fuse_code + cfg.agg_code);
        if gate == "f" {
            store
                .get_mut("agg.f.b")
                .expect("just inserted")
                .data_mut()
                .fill(1.0);
        }
    }
}

/// Inserts `{prefix}.w` (rows x cols) and `{prefix}.b` (rows).
pub(crate) fn init_affine(
    store: &mut ParamStore,
    rng: &mut impl Rng,
    prefix: &str,
    rows: usize,
    cols: usize,
) {
    let bound = (6.0 / (rows + cols) as f32).sqrt();
    let weights: Vec<f32> = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
    store.insert(format!("{prefix}.w"), TensorValue::new(vec![rows, cols], weights));
    store.insert(format!("{prefix}.b"), TensorValue::zeros(vec![rows]));
}
