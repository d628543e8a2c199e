//! Synthetic world families.
//!
//! Each family is a pure function of a [`WorldSpec`]: the same spec always
//! yields the same grid, so datasets regenerate exactly from (family, dims,
//! seed) triples. The families are deliberately simple enough to reason
//! about in tests while still rewarding different glimpse strategies:
//!
//! - [`WorldFamily::Lighthouse`] — one bright beacon cell carrying a glyph,
//!   surrounded by a halo that decays with wraparound azimuth distance. A
//!   single glimpse anywhere hints at where the beacon is; only looking at
//!   it reveals the glyph.
//! - [`WorldFamily::GradientSky`] — an azimuth-invariant vertical intensity
//!   ramp. Two hidden scalars (horizon and top intensity) determine every
//!   pixel, so any one view determines the whole grid.
//! - [`WorldFamily::TexturedHalves`] — one azimuth half carries a smooth
//!   class-specific stripe pattern, the other half is per-view noise. Class
//!   is recoverable only by looking at the textured half.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GridDims, GridError, ViewGrid, Viewpoint};

/// Which generator builds a world, with its family-specific knobs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WorldFamily {
    /// A beacon cell with a glyph, fading halo elsewhere.
    Lighthouse {
        /// Number of distinct glyphs (class labels), `1..=255`.
        glyph_count: u32,
        /// Halo width in azimuth cells.
        sigma: f32,
    },
    /// A vertical intensity ramp, identical at every azimuth.
    GradientSky,
    /// Stripe texture on one azimuth half, noise on the other.
    TexturedHalves {
        /// Number of texture classes, at least 2.
        class_count: u32,
        /// This world's class, `0..class_count`.
        class: u32,
    },
}

/// A complete, regenerable description of one world.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorldSpec {
    pub family: WorldFamily,
    pub dims: GridDims,
    pub seed: u64,
}

/// Generates the world a spec describes.
pub fn generate_world(spec: &WorldSpec) -> Result<ViewGrid, GridError> {
    spec.dims.validate()?;
    match spec.family {
        WorldFamily::Lighthouse { glyph_count, sigma } => lighthouse(spec, glyph_count, sigma),
        WorldFamily::GradientSky => gradient_sky(spec),
        WorldFamily::TexturedHalves { class_count, class } => {
            textured_halves(spec, class_count, class)
        }
    }
}

/// Where a lighthouse world's beacon sits and which glyph it shows, without
/// generating pixels. Draws the same leading random values as
/// [`generate_world`], so the two always agree.
pub fn lighthouse_layout(spec: &WorldSpec) -> Result<(Viewpoint, u32), GridError> {
    spec.dims.validate()?;
    let WorldFamily::Lighthouse { glyph_count, .. } = spec.family else {
        return Err(GridError::BadDims("lighthouse_layout on a non-lighthouse spec".to_string()));
    };
    check_glyph_support(spec.dims, glyph_count)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok(draw_lighthouse_layout(&mut rng, spec.dims, glyph_count))
}

fn check_glyph_support(dims: GridDims, glyph_count: u32) -> Result<(), GridError> {
    if !(1..=255).contains(&glyph_count) {
        return Err(GridError::GlyphCountUnsupported(glyph_count));
    }
    // The glyph is a 2x4 block bitmap; each block needs at least one pixel.
    if dims.view_h < 2 || dims.view_w < 4 {
        return Err(GridError::ViewTooSmall { h: dims.view_h, w: dims.view_w });
    }
    Ok(())
}

fn draw_lighthouse_layout(rng: &mut ChaCha8Rng, dims: GridDims, glyph_count: u32) -> (Viewpoint, u32) {
    let elev = rng.random_range(0..dims.n_elev);
    let azim = rng.random_range(0..dims.m_azim);
    let glyph = rng.random_range(0..glyph_count);
    (Viewpoint { elev, azim }, glyph)
}

fn lighthouse(spec: &WorldSpec, glyph_count: u32, sigma: f32) -> Result<ViewGrid, GridError> {
    let dims = spec.dims;
    check_glyph_support(dims, glyph_count)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (beacon, glyph) = draw_lighthouse_layout(&mut rng, dims, glyph_count);

    let mut data = Vec::with_capacity(dims.grid_len());
    for e in 0..dims.n_elev {
        for k in 0..dims.m_azim {
            // Halo brightness depends on wraparound azimuth distance only.
            let raw = k.abs_diff(beacon.azim);
            let d = raw.min(dims.m_azim - raw) as f32;
            let halo = 0.1 + 0.7 * (-(d * d) / (sigma * sigma)).exp();
            let is_beacon = e == beacon.elev && k == beacon.azim;
            for r in 0..dims.view_h {
                for c in 0..dims.view_w {
                    let value = if is_beacon && glyph_bit_on(glyph, dims, r, c) {
                        0.95
                    } else {
                        halo
                    };
                    for _ in 0..dims.channels {
                        data.push(value);
                    }
                }
            }
        }
    }
    ViewGrid::new(dims, data, Some(glyph))
}

/// Whether pixel (r, c) of the beacon view falls on an "on" block of the
/// glyph bitmap. Glyph `g` renders the eight bits of `g + 1` as a 2x4 block
/// grid, most significant bit top-left; `g + 1` is never zero, so every
/// glyph lights at least one block.
fn glyph_bit_on(glyph: u32, dims: GridDims, r: usize, c: usize) -> bool {
    let block_row = r * 2 / dims.view_h;
    let block_col = c * 4 / dims.view_w;
    let bit = 7 - (block_row * 4 + block_col);
    (glyph + 1) >> bit & 1 == 1
}

fn gradient_sky(spec: &WorldSpec) -> Result<ViewGrid, GridError> {
    let dims = spec.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let top: f32 = rng.random_range(0.6..0.9);
    let horizon: f32 = rng.random_range(-1.0..-0.25);

    // I(z) = 0.1 + (top - 0.1) * (z - horizon) / (1 - horizon), an affine
    // function of altitude z. The horizon sits below the visible range, so
    // every view is a strict linear ramp and two rows of any single view
    // recover (horizon, top) exactly.
    let slope = (top - 0.1) / (1.0 - horizon);
    let mut data = Vec::with_capacity(dims.grid_len());
    for e in 0..dims.n_elev {
        for _k in 0..dims.m_azim {
            for r in 0..dims.view_h {
                let z = altitude(dims, e, r);
                let value = 0.1 + slope * (z - horizon);
                for _ in 0..dims.view_w * dims.channels {
                    data.push(value);
                }
            }
        }
    }
    ViewGrid::new(dims, data, None)
}

/// Altitude of view row `r` at elevation `e`, in `(0, 1)`: elevation 0, row
/// 0 is the top of the sky and altitude falls linearly from there.
pub fn altitude(dims: GridDims, elev: usize, row: usize) -> f32 {
    1.0 - ((elev * dims.view_h + row) as f32 + 0.5) / ((dims.n_elev * dims.view_h) as f32)
}

fn textured_halves(spec: &WorldSpec, class_count: u32, class: u32) -> Result<ViewGrid, GridError> {
    let dims = spec.dims;
    if !dims.m_azim.is_multiple_of(2) {
        return Err(GridError::OddAzimuthCount(dims.m_azim));
    }
    if class_count < 2 {
        return Err(GridError::ClassCountTooSmall(class_count));
    }
    if class >= class_count {
        return Err(GridError::ClassOutOfRange { class, count: class_count });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Stripe orientation is the class angle; frequency cycles through three
    // steps so neighboring classes differ in both.
    let theta = std::f32::consts::PI * class as f32 / class_count as f32;
    let freq = (2 + class % 3) as f32;
    let texture: Vec<f32> = (0..dims.view_h * dims.view_w)
        .map(|i| {
            let (r, c) = (i / dims.view_w, i % dims.view_w);
            let phase = c as f32 * theta.cos() + r as f32 * theta.sin();
            0.5 + 0.45 * (2.0 * std::f32::consts::PI * freq * phase / dims.view_w as f32).cos()
        })
        .collect();

    let half = dims.m_azim / 2;
    let mut data = Vec::with_capacity(dims.grid_len());
    for _e in 0..dims.n_elev {
        for k in 0..dims.m_azim {
            if k < half {
                for &v in &texture {
                    for _ in 0..dims.channels {
                        data.push(v);
                    }
                }
            } else {
                for _ in 0..dims.view_len() {
                    data.push(rng.random::<f32>());
                }
            }
        }
    }
    ViewGrid::new(dims, data, Some(class))
}
