//! Finite-difference validation of analytic gradients.

use rand::Rng;

use super::{Gradients, ParamStore, TapeError};

/// A single scalar coordinate of a named parameter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamCoord {
    pub name: String,
    pub index: usize,
}

/// Outcome of a gradient check.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest relative error observed across all checked coordinates.
    pub max_rel_err: f64,
    /// The coordinate that produced `max_rel_err`, if any were checked.
    pub worst: Option<ParamCoord>,
    /// Number of coordinates compared.
    pub checked: usize,
}

/// Compares analytic gradients against central finite differences at up to
/// `coords_per_param` randomly chosen coordinates of every parameter.
///
/// `f` evaluates the scalar objective and its analytic gradients at the given
/// parameter values; it must be deterministic in those values (seed any
/// internal sampling). Returns the worst relative error
/// `|a - n| / max(|a|, |n|, 1e-8)` over all checked coordinates.
pub fn grad_check<F>(
    f: &F,
    params: &ParamStore,
    eps: f32,
    coords_per_param: usize,
    rng: &mut impl Rng,
) -> Result<GradCheckReport, TapeError>
where
    F: Fn(&ParamStore) -> Result<(f64, Gradients), TapeError>,
{
    let mut coords = Vec::new();
    for (name, value) in params.iter() {
        let len = value.len();
        if len <= coords_per_param {
            coords.extend((0..len).map(|index| ParamCoord { name: name.to_string(), index }));
        } else {
            // Partial Fisher-Yates: the first `coords_per_param` slots of a
            // virtual shuffle, giving distinct indices.
            let mut pool: Vec<usize> = (0..len).collect();
            for k in 0..coords_per_param {
                let j = k + rng.random_range(0..len - k);
                pool.swap(k, j);
                coords.push(ParamCoord { name: name.to_string(), index: pool[k] });
            }
        }
    }
    grad_check_coords(f, params, eps, &coords)
}

/// Draws `n` parameter coordinates uniformly over every scalar in the store.
pub fn sample_coords(params: &ParamStore, n: usize, rng: &mut impl Rng) -> Vec<ParamCoord> {
    let total = params.value_count();
    let mut coords = Vec::with_capacity(n);
    for _ in 0..n {
        let mut flat = rng.random_range(0..total);
        for (name, value) in params.iter() {
            if flat < value.len() {
                coords.push(ParamCoord { name: name.to_string(), index: flat });
                break;
            }
            flat -= value.len();
        }
    }
    coords
}

/// Compares analytic gradients against central finite differences at the
/// given coordinates. See [`grad_check`].
pub fn grad_check_coords<F>(
    f: &F,
    params: &ParamStore,
    eps: f32,
    coords: &[ParamCoord],
) -> Result<GradCheckReport, TapeError>
where
    F: Fn(&ParamStore) -> Result<(f64, Gradients), TapeError>,
{
    let (_, analytic) = f(params)?;
    let mut work = params.clone();
    let mut report = GradCheckReport { max_rel_err: 0.0, worst: None, checked: 0 };
    for coord in coords {
        let original = work
            .get(&coord.name)
            .ok_or_else(|| TapeError::UnknownParam(coord.name.clone()))?
            .data()[coord.index];
        // Snap both endpoints to f32 before differencing: the objective only
        // ever sees f32 parameters, so the honest step is the f32 gap between
        // the two perturbed values, not 2*eps.
        let hi = (f64::from(original) + f64::from(eps)) as f32;
        let lo = (f64::from(original) - f64::from(eps)) as f32;
        let step = f64::from(hi) - f64::from(lo);

        set(&mut work, coord, hi);
        let (loss_hi, _) = f(&work)?;
        set(&mut work, coord, lo);
        let (loss_lo, _) = f(&work)?;
        set(&mut work, coord, original);

        let numeric = (loss_hi - loss_lo) / step;
        let a = analytic
            .get(&coord.name)
            .map_or(0.0, |g| f64::from(g.data()[coord.index]));
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        report.checked += 1;
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst = Some(coord.clone());
        }
    }
    Ok(report)
}

fn set(params: &mut ParamStore, coord: &ParamCoord, value: f32) {
    params
        .get_mut(&coord.name)
        .expect("coordinate validated by caller")
        .data_mut()[coord.index] = value;
}
