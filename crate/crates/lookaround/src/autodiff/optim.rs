//! Momentum SGD over a [`ParamStore`].

use super::{Gradients, ParamStore, TapeError};

/// Applies one SGD-with-momentum update to every parameter in `params`.
///
/// For each parameter `p` with gradient `g` and velocity `v`:
///
/// ```text
/// v <- momentum * v + g
/// p <- p - lr * v
/// ```
///
/// Velocity buffers are created on first use and persist in the store.
///
/// Every parameter in the store must have a gradient entry — callers that
/// freeze a subset of parameters pass explicit zeros for them, which keeps
/// "frozen" observable as a plain no-op update rather than a special case
/// here. A missing entry returns [`TapeError::MissingGradient`] before any
/// parameter is touched.
pub fn sgd_step(
    params: &mut ParamStore,
    grads: &Gradients,
    lr: f32,
    momentum: f32,
) -> Result<(), TapeError> {
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in &names {
        match grads.get(name) {
            Some(g) if g.shape() == params.get(name).expect("listed name").shape() => {}
            Some(g) => {
                return Err(TapeError::ShapeMismatch {
                    op: "sgd_step",
                    details: format!(
                        "gradient for {name:?} has shape {:?}, parameter has {:?}",
                        g.shape(),
                        params.get(name).expect("listed name").shape()
                    ),
                })
            }
            None => return Err(TapeError::MissingGradient(name.clone())),
        }
    }
    for name in &names {
        let g = grads.get(name).expect("validated above").clone();
        let velocity = params.velocity_mut(name);
        for (v, &gk) in velocity.data_mut().iter_mut().zip(g.data()) {
            *v = momentum * *v + gk;
        }
        let step: Vec<f32> = velocity.data().iter().map(|&v| lr * v).collect();
        let p = params.get_mut(name).expect("listed name");
        for (pk, sk) in p.data_mut().iter_mut().zip(step) {
            *pk -= sk;
        }
    }
    Ok(())
}
