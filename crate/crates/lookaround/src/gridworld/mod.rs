//! View grids, agent motion, and synthetic worlds.
//!
//! A *view grid* is the full panoramic content of one world: `N` elevation
//! rows by `M` azimuth columns of small views, each `H x W x C` pixels in
//! `[0, 1]`. An agent occupies one cell at a time, sees exactly that cell's
//! view, and moves by bounded relative actions — elevation clamps at the
//! poles while azimuth wraps around.
//!
//! Nothing here knows about networks or training; this module is the world
//! side of the loop and is deliberately plain data plus pure functions, so
//! tests can treat it as ground truth.

mod format;
mod generate;

use std::fmt;
use std::io;

use thiserror::Error;

pub use format::{load_viewgrid, save_viewgrid, viewgrid_from_bytes, viewgrid_to_bytes};
pub use generate::{altitude, generate_world, lighthouse_layout, WorldFamily, WorldSpec};

/// Errors from grid construction, generation, or the `VGRD1` format.
#[derive(Debug, Error)]
pub enum GridError {
    #[error("bad grid dimensions: {0}")]
    BadDims(String),
    #[error("pixel values must be finite and within [0, 1]")]
    BadPixel,
    #[error("view of {h}x{w} pixels is too small for a beacon glyph (needs at least 2x4)")]
    ViewTooSmall { h: usize, w: usize },
    #[error("glyph count {0} unsupported (must be 1..=255)")]
    GlyphCountUnsupported(u32),
    #[error("azimuth count {0} must be even to split into halves")]
    OddAzimuthCount(usize),
    #[error("class count {0} too small (must be at least 2)")]
    ClassCountTooSmall(u32),
    #[error("class {class} out of range for {count} classes")]
    ClassOutOfRange { class: u32, count: u32 },
    #[error("label {0:#x} collides with the unlabeled sentinel")]
    LabelIsSentinel(u32),
    #[error("bad magic: not a VGRD1 view grid")]
    BadMagic,
    #[error("view grid file truncated")]
    Truncated,
    #[error("trailing bytes after view grid data")]
    TrailingBytes,
    #[error("grid dimensions overflow the supported size")]
    DimsOverflow,
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Shape of a view grid: `n_elev x m_azim` cells of `view_h x view_w x
/// channels` pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridDims {
    pub n_elev: usize,
    pub m_azim: usize,
    pub view_h: usize,
    pub view_w: usize,
    pub channels: usize,
}

impl GridDims {
    /// Validates that every extent is positive and the total pixel count is
    /// representable.
    pub fn validate(&self) -> Result<(), GridError> {
        let extents = [self.n_elev, self.m_azim, self.view_h, self.view_w, self.channels];
        if extents.contains(&0) {
            return Err(GridError::BadDims(format!("{self:?} has a zero extent")));
        }
        self.checked_grid_len().ok_or(GridError::DimsOverflow)?;
        Ok(())
    }

    fn checked_grid_len(&self) -> Option<usize> {
        const MAX_VALUES: usize = 1 << 28;
        [self.m_azim, self.view_h, self.view_w, self.channels]
            .iter()
            .try_fold(self.n_elev, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= MAX_VALUES)
    }

    /// Pixels in one view.
    pub fn view_len(&self) -> usize {
        self.view_h * self.view_w * self.channels
    }

    /// Cells in the grid.
    pub fn cell_count(&self) -> usize {
        self.n_elev * self.m_azim
    }

    /// Pixels in the whole grid.
    pub fn grid_len(&self) -> usize {
        self.cell_count() * self.view_len()
    }

    /// Flat cell index of a viewpoint, row-major over (elevation, azimuth).
    pub fn cell_index(&self, vp: Viewpoint) -> usize {
        debug_assert!(vp.elev < self.n_elev && vp.azim < self.m_azim);
        vp.elev * self.m_azim + vp.azim
    }

    /// Offset of a viewpoint's first pixel in the flat grid layout.
    pub fn cell_offset(&self, vp: Viewpoint) -> usize {
        self.cell_index(vp) * self.view_len()
    }
}

/// A cell position: elevation row and azimuth column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Viewpoint {
    pub elev: usize,
    pub azim: usize,
}

impl fmt::Display for Viewpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(e{}, a{})", self.elev, self.azim)
    }
}

/// A relative camera motion in grid cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Action {
    pub d_elev: i32,
    pub d_azim: i32,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:+}, {:+})", self.d_elev, self.d_azim)
    }
}

/// The neighborhood an agent may move within in one step.
///
/// Legal actions are every `(d_elev, d_azim)` with `|d_elev| <= e_radius`
/// and `|d_azim| <= a_radius`, including staying put. Their canonical order
/// is row-major: `d_elev` ascending, then `d_azim` ascending — the order of
/// [`MotionModel::legal_actions`], of action indices, and of the motion
/// one-hot in [`Proprioception`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MotionModel {
    pub e_radius: usize,
    pub a_radius: usize,
}

impl MotionModel {
    /// Number of legal actions.
    pub fn action_count(&self) -> usize {
        (2 * self.e_radius + 1) * (2 * self.a_radius + 1)
    }

    /// All legal actions in canonical order.
    pub fn legal_actions(&self) -> Vec<Action> {
        (0..self.action_count()).map(|i| self.action_at(i)).collect()
    }

    /// The action at a canonical index.
    ///
    /// # Panics
    ///
    /// Panics if `index >= action_count()`.
    pub fn action_at(&self, index: usize) -> Action {
        assert!(index < self.action_count(), "action index {index} out of range");
        let row_len = 2 * self.a_radius + 1;
        Action {
            d_elev: (index / row_len) as i32 - self.e_radius as i32,
            d_azim: (index % row_len) as i32 - self.a_radius as i32,
        }
    }

    /// The canonical index of an action, or `None` if it is illegal.
    pub fn action_index(&self, action: Action) -> Option<usize> {
        let (er, ar) = (self.e_radius as i32, self.a_radius as i32);
        if action.d_elev.abs() > er || action.d_azim.abs() > ar {
            return None;
        }
        let row_len = 2 * self.a_radius + 1;
        Some((action.d_elev + er) as usize * row_len + (action.d_azim + ar) as usize)
    }
}

/// Applies an action to a viewpoint: elevation clamps at the grid edge,
/// azimuth wraps around.
pub fn apply_action(dims: GridDims, vp: Viewpoint, action: Action) -> Viewpoint {
    let elev = (vp.elev as i64 + i64::from(action.d_elev)).clamp(0, dims.n_elev as i64 - 1);
    let azim = (vp.azim as i64 + i64::from(action.d_azim)).rem_euclid(dims.m_azim as i64);
    Viewpoint { elev: elev as usize, azim: azim as usize }
}

/// What the agent senses about its own state: a one-hot over elevations
/// followed by a one-hot over the action that produced the current view
/// (all zeros on the first step, before any action was taken).
///
/// Azimuth is deliberately absent — the agent knows how high it looks but
/// not which way, so policies must be azimuth-relative.
#[derive(Clone, Debug, PartialEq)]
pub struct Proprioception {
    values: Vec<f32>,
}

impl Proprioception {
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Builds the proprioception vector for an agent at elevation `elev` whose
/// current view was produced by the action at `last_action_index`
/// (`None` on the first step).
///
/// # Panics
///
/// Panics if `elev` or the action index is out of range.
pub fn make_proprioception(
    dims: GridDims,
    motion: MotionModel,
    elev: usize,
    last_action_index: Option<usize>,
) -> Proprioception {
    assert!(elev < dims.n_elev, "elevation {elev} out of range");
    let mut values = vec![0.0; dims.n_elev + motion.action_count()];
    values[elev] = 1.0;
    if let Some(index) = last_action_index {
        assert!(index < motion.action_count(), "action index {index} out of range");
        values[dims.n_elev + index] = 1.0;
    }
    Proprioception { values }
}

/// One world: the full grid of views, with an optional class label.
///
/// Pixel data is flat `f32` in `[elev][azim][row][col][channel]` order, all
/// values finite and within `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewGrid {
    dims: GridDims,
    data: Vec<f32>,
    label: Option<u32>,
}

impl ViewGrid {
    /// Builds a grid, validating dimensions, data length, and pixel range.
    pub fn new(dims: GridDims, data: Vec<f32>, label: Option<u32>) -> Result<Self, GridError> {
        dims.validate()?;
        if data.len() != dims.grid_len() {
            return Err(GridError::BadDims(format!(
                "{} values do not fill {dims:?} ({} expected)",
                data.len(),
                dims.grid_len()
            )));
        }
        if data.iter().any(|&v| !v.is_finite() || !(0.0..=1.0).contains(&v)) {
            return Err(GridError::BadPixel);
        }
        Ok(Self { dims, data, label })
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn label(&self) -> Option<u32> {
        self.label
    }

    /// The exact pixels visible from a viewpoint.
    ///
    /// # Panics
    ///
    /// Panics if the viewpoint lies outside the grid.
    pub fn view(&self, vp: Viewpoint) -> &[f32] {
        assert!(
            vp.elev < self.dims.n_elev && vp.azim < self.dims.m_azim,
            "viewpoint {vp} outside grid"
        );
        let start = self.dims.cell_offset(vp);
        &self.data[start..start + self.dims.view_len()]
    }

    /// A copy of this grid with every azimuth column shifted left by
    /// `shift`: `rolled[e][k] = self[e][(k + shift) % M]`.
    ///
    /// This is how a world is re-expressed in an agent's frame: an agent
    /// whose first view was world azimuth `shift` calls that azimuth `0`.
    pub fn roll_azimuth(&self, shift: usize) -> ViewGrid {
        let dims = self.dims;
        let mut data = Vec::with_capacity(self.data.len());
        for e in 0..dims.n_elev {
            for k in 0..dims.m_azim {
                let src = Viewpoint { elev: e, azim: (k + shift) % dims.m_azim };
                data.extend_from_slice(self.view(src));
            }
        }
        ViewGrid { dims, data, label: self.label }
    }
}

/// Mean squared error between a flat predicted grid and a target grid,
/// optionally restricted to a subset of cells.
///
/// The mean is over every pixel of every included cell. `include`, when
/// given, holds one flag per cell in row-major (elevation, azimuth) order
/// and must select at least one cell.
pub fn grid_mse(
    pred: &[f32],
    target: &ViewGrid,
    include: Option<&[bool]>,
) -> Result<f64, GridError> {
    let dims = target.dims();
    if pred.len() != dims.grid_len() {
        return Err(GridError::BadDims(format!(
            "prediction has {} values, grid needs {}",
            pred.len(),
            dims.grid_len()
        )));
    }
    if let Some(flags) = include {
        if flags.len() != dims.cell_count() {
            return Err(GridError::BadDims(format!(
                "{} include flags for {} cells",
                flags.len(),
                dims.cell_count()
            )));
        }
        if flags.iter().all(|&f| !f) {
            return Err(GridError::BadDims("no cells included".to_string()));
        }
    }
    let view_len = dims.view_len();
    let mut acc = 0.0f64;
    let mut pixels = 0usize;
    for cell in 0..dims.cell_count() {
        if include.is_some_and(|flags| !flags[cell]) {
            continue;
        }
        let span = cell * view_len..(cell + 1) * view_len;
        for (p, t) in pred[span.clone()].iter().zip(&target.data()[span]) {
            let d = f64::from(*p) - f64::from(*t);
            acc += d * d;
        }
        pixels += view_len;
    }
    Ok(acc / pixels as f64)
}
