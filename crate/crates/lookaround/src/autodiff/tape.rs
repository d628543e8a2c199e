//! The recording tape: forward operations and the backward sweep.

use rand::Rng;
use thiserror::Error;

use super::{Gradients, ParamStore, TensorValue};

/// Handle to a value recorded on a [`Tape`].
///
/// Only meaningful for the tape that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ValueId(usize);

/// Element-wise nonlinearities supported by [`Tape::activation`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
}

/// Errors raised while recording or differentiating a tape.
#[derive(Debug, Error)]
pub enum TapeError {
    #[error("shape mismatch in {op}: {details}")]
    ShapeMismatch { op: &'static str, details: String },
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("backward root has shape {shape:?}, expected a scalar")]
    RootNotScalar { shape: Vec<usize> },
    #[error("distribution sums to {sum}, expected 1 within 1e-5")]
    NotNormalized { sum: f64 },
    #[error("non-finite value encountered in {op}")]
    NonFinite { op: &'static str },
    #[error("index {index} out of range for {op} of length {len}")]
    IndexOutOfRange { op: &'static str, index: usize, len: usize },
    #[error("paste spans overlap at offset {offset}")]
    OverlappingSpans { offset: usize },
    #[error("mask must contain only 0.0 and 1.0 and select at least one element")]
    InvalidMask,
    #[error("no gradient for parameter {0:?}")]
    MissingGradient(String),
}

#[derive(Debug)]
enum Op {
    Leaf,
    Affine { x: ValueId, w: String, b: String },
    Activation { x: ValueId, kind: Activation },
    Add { a: ValueId, b: ValueId },
    Mul { a: ValueId, b: ValueId },
    Concat { a: ValueId, b: ValueId },
    Sum { x: ValueId },
    Scale { x: ValueId, c: f32 },
    Softmax { x: ValueId },
    LogPick { probs: ValueId, index: usize },
    Mse { pred: ValueId, target: ValueId, mask: Option<Vec<f32>> },
    Paste { base: ValueId, spans: Vec<(usize, ValueId)> },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f32>,
    /// Unrounded `f64` values, kept in two cases: every node of a
    /// high-precision tape (see [`Tape::new_precise`]), and scalar
    /// reduction results on any tape. Finite-difference checks read these
    /// so their resolution is not capped by f32 rounding of the loss.
    shadow: Option<Vec<f64>>,
    op: Op,
}

/// A reverse-mode tape over `f32` tensors.
///
/// Record a forward pass with the operation methods, then call
/// [`Tape::backward`] once. Parameters are referenced by name and read from
/// the [`ParamStore`] passed to each operation; the store must hold the same
/// values when `backward` runs as it did during recording.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    saved_grads: Vec<Option<Vec<f32>>>,
    precise: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape whose forward pass additionally carries full `f64` shadow
    /// values from node to node, readable via [`Tape::scalar_f64`].
    ///
    /// Parameters and recorded `f32` values stay f32, so gradients are
    /// unaffected; only the smoothness of the scalar objective improves.
    /// This exists for finite-difference gradient checks, where the
    /// staircase a pure-f32 forward makes of the objective would swamp a
    /// small step. Training uses the plain [`Tape::new`].
    pub fn new_precise() -> Self {
        Self { precise: true, ..Self::default() }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// The forward value of a recorded node.
    pub fn value(&self, id: ValueId) -> &[f32] {
        &self.nodes[id.0].value
    }

    /// The shape of a recorded node.
    pub fn shape(&self, id: ValueId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    /// The value of a single-element node.
    ///
    /// # Panics
    ///
    /// Panics if the node is not a scalar.
    pub fn scalar(&self, id: ValueId) -> f32 {
        let v = self.value(id);
        assert_eq!(v.len(), 1, "scalar() on node of shape {:?}", self.shape(id));
        v[0]
    }

    /// The value of a single-element node at full `f64` precision where the
    /// producing operation kept one (reductions, scalar arithmetic, and all
    /// nodes of a [`Tape::new_precise`] tape), falling back to the widened
    /// f32 value otherwise.
    ///
    /// # Panics
    ///
    /// Panics if the node is not a scalar.
    pub fn scalar_f64(&self, id: ValueId) -> f64 {
        let node = &self.nodes[id.0];
        assert_eq!(node.value.len(), 1, "scalar_f64() on node of shape {:?}", node.shape);
        match &node.shadow {
            Some(shadow) => shadow[0],
            None => f64::from(node.value[0]),
        }
    }

    /// The gradient of the most recent [`Tape::backward`] call with respect
    /// to node `id`, or `None` if no gradient reached it.
    pub fn grad(&self, id: ValueId) -> Option<&[f32]> {
        self.saved_grads.get(id.0)?.as_deref()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f32>, op: Op) -> ValueId {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node { shape, value, shadow: None, op });
        ValueId(self.nodes.len() - 1)
    }

    fn push_scalar(&mut self, value: f64, op: Op) -> ValueId {
        self.nodes.push(Node {
            shape: vec![1],
            value: vec![value as f32],
            shadow: Some(vec![value]),
            op,
        });
        ValueId(self.nodes.len() - 1)
    }

    fn push_shadowed(&mut self, shape: Vec<usize>, shadow: Vec<f64>, op: Op) -> ValueId {
        debug_assert_eq!(shape.iter().product::<usize>(), shadow.len());
        let value: Vec<f32> = shadow.iter().map(|&v| v as f32).collect();
        self.nodes.push(Node { shape, value, shadow: Some(shadow), op });
        ValueId(self.nodes.len() - 1)
    }

    /// The `f64` view of a node, widening the f32 values if no shadow was
    /// kept. Only used on high-precision tapes, where sizes are small.
    fn shadow_of(&self, id: ValueId) -> Vec<f64> {
        let node = &self.nodes[id.0];
        match &node.shadow {
            Some(shadow) => shadow.clone(),
            None => node.value.iter().map(|&v| f64::from(v)).collect(),
        }
    }

    /// `f64` view of a scalar operand for precise scalar arithmetic.
    fn operand_f64(&self, id: ValueId) -> Option<f64> {
        let node = &self.nodes[id.0];
        (node.value.len() == 1).then(|| match &node.shadow {
            Some(shadow) => shadow[0],
            None => f64::from(node.value[0]),
        })
    }

    /// Records a constant input.
    pub fn leaf(&mut self, value: TensorValue) -> ValueId {
        let shape = value.shape().to_vec();
        let data = value.data().to_vec();
        self.push(shape, data, Op::Leaf)
    }

    /// Records a constant rank-1 input copied from a slice.
    pub fn leaf_slice(&mut self, values: &[f32]) -> ValueId {
        self.push(vec![values.len()], values.to_vec(), Op::Leaf)
    }

    /// Records `y = W x + b` for parameters `w_name` (rank-2) and `b_name`
    /// (rank-1) from `params`.
    pub fn affine(
        &mut self,
        x: ValueId,
        w_name: &str,
        b_name: &str,
        params: &ParamStore,
    ) -> Result<ValueId, TapeError> {
        let w = params
            .get(w_name)
            .ok_or_else(|| TapeError::UnknownParam(w_name.to_string()))?;
        let b = params
            .get(b_name)
            .ok_or_else(|| TapeError::UnknownParam(b_name.to_string()))?;
        let (rows, cols) = match *w.shape() {
            [r, c] => (r, c),
            _ => {
                return Err(TapeError::ShapeMismatch {
                    op: "affine",
                    details: format!("{w_name:?} has shape {:?}, expected rank 2", w.shape()),
                })
            }
        };
        let xv = &self.nodes[x.0].value;
        if xv.len() != cols || b.len() != rows {
            return Err(TapeError::ShapeMismatch {
                op: "affine",
                details: format!(
                    "{w_name:?} is {rows}x{cols} but input has {} values and {b_name:?} has {}",
                    xv.len(),
                    b.len()
                ),
            });
        }
        let wd = w.data();
        let bd = b.data();
        let op = Op::Affine { x, w: w_name.to_string(), b: b_name.to_string() };
        if self.precise {
            let xs = self.shadow_of(x);
            let mut y = Vec::with_capacity(rows);
            for i in 0..rows {
                let row = &wd[i * cols..(i + 1) * cols];
                let mut acc = f64::from(bd[i]);
                for (wij, xj) in row.iter().zip(&xs) {
                    acc += f64::from(*wij) * xj;
                }
                y.push(acc);
            }
            return Ok(self.push_shadowed(vec![rows], y, op));
        }
        let mut y = Vec::with_capacity(rows);
        for i in 0..rows {
            let row = &wd[i * cols..(i + 1) * cols];
            y.push((dot_f64(row, xv) + f64::from(bd[i])) as f32);
        }
        Ok(self.push(vec![rows], y, op))
    }

    /// Records an element-wise nonlinearity.
    pub fn activation(&mut self, x: ValueId, kind: Activation) -> ValueId {
        let shape = self.nodes[x.0].shape.clone();
        if self.precise {
            let shadow: Vec<f64> = self
                .shadow_of(x)
                .iter()
                .map(|&v| match kind {
                    Activation::Tanh => v.tanh(),
                    Activation::Relu => v.max(0.0),
                    Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
                })
                .collect();
            return self.push_shadowed(shape, shadow, Op::Activation { x, kind });
        }
        let value: Vec<f32> = self.nodes[x.0]
            .value
            .iter()
            .map(|&v| match kind {
                Activation::Tanh => v.tanh(),
                Activation::Relu => v.max(0.0),
                Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
            })
            .collect();
        self.push(shape, value, Op::Activation { x, kind })
    }

    /// Records element-wise addition of two equally-shaped values.
    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, TapeError> {
        self.check_same_shape("add", a, b)?;
        if self.precise {
            let shadow: Vec<f64> = self
                .shadow_of(a)
                .iter()
                .zip(self.shadow_of(b))
                .map(|(&x, y)| x + y)
                .collect();
            let shape = self.nodes[a.0].shape.clone();
            return Ok(self.push_shadowed(shape, shadow, Op::Add { a, b }));
        }
        if let (Some(pa), Some(pb)) = (self.operand_f64(a), self.operand_f64(b)) {
            return Ok(self.push_scalar(pa + pb, Op::Add { a, b }));
        }
        let value: Vec<f32> = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(shape, value, Op::Add { a, b }))
    }

    /// Records the element-wise (Hadamard) product of two equally-shaped
    /// values.
    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, TapeError> {
        self.check_same_shape("mul", a, b)?;
        if self.precise {
            let shadow: Vec<f64> = self
                .shadow_of(a)
                .iter()
                .zip(self.shadow_of(b))
                .map(|(&x, y)| x * y)
                .collect();
            let shape = self.nodes[a.0].shape.clone();
            return Ok(self.push_shadowed(shape, shadow, Op::Mul { a, b }));
        }
        if let (Some(pa), Some(pb)) = (self.operand_f64(a), self.operand_f64(b)) {
            return Ok(self.push_scalar(pa * pb, Op::Mul { a, b }));
        }
        let value: Vec<f32> = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(shape, value, Op::Mul { a, b }))
    }

    /// Records the concatenation of two rank-1 values.
    pub fn concat(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, TapeError> {
        for id in [a, b] {
            if self.nodes[id.0].shape.len() != 1 {
                return Err(TapeError::ShapeMismatch {
                    op: "concat",
                    details: format!("input has shape {:?}, expected rank 1", self.nodes[id.0].shape),
                });
            }
        }
        if self.precise {
            let mut shadow = self.shadow_of(a);
            shadow.extend(self.shadow_of(b));
            let len = shadow.len();
            return Ok(self.push_shadowed(vec![len], shadow, Op::Concat { a, b }));
        }
        let mut value = self.nodes[a.0].value.clone();
        value.extend_from_slice(&self.nodes[b.0].value);
        let len = value.len();
        Ok(self.push(vec![len], value, Op::Concat { a, b }))
    }

    /// Records the sum of all elements as a scalar.
    pub fn sum(&mut self, x: ValueId) -> ValueId {
        if self.precise {
            let total = self.shadow_of(x).iter().sum();
            return self.push_scalar(total, Op::Sum { x });
        }
        let total = sum_f64(&self.nodes[x.0].value);
        self.push_scalar(total, Op::Sum { x })
    }

    /// Records multiplication by a constant.
    pub fn scale(&mut self, x: ValueId, c: f32) -> ValueId {
        if self.precise {
            let shadow: Vec<f64> = self.shadow_of(x).iter().map(|&v| f64::from(c) * v).collect();
            let shape = self.nodes[x.0].shape.clone();
            return self.push_shadowed(shape, shadow, Op::Scale { x, c });
        }
        if let Some(px) = self.operand_f64(x) {
            return self.push_scalar(f64::from(c) * px, Op::Scale { x, c });
        }
        let shape = self.nodes[x.0].shape.clone();
        let value: Vec<f32> = self.nodes[x.0].value.iter().map(|&v| v * c).collect();
        self.push(shape, value, Op::Scale { x, c })
    }

    /// Records a numerically stable softmax over a rank-1 value.
    pub fn softmax(&mut self, x: ValueId) -> Result<ValueId, TapeError> {
        let xv = &self.nodes[x.0].value;
        if self.nodes[x.0].shape.len() != 1 || xv.is_empty() {
            return Err(TapeError::ShapeMismatch {
                op: "softmax",
                details: format!("input has shape {:?}, expected non-empty rank 1", self.nodes[x.0].shape),
            });
        }
        if xv.iter().any(|v| !v.is_finite()) {
            return Err(TapeError::NonFinite { op: "softmax" });
        }
        if self.precise {
            let xs = self.shadow_of(x);
            let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = xs.iter().map(|&v| (v - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            let shadow: Vec<f64> = exps.iter().map(|&e| e / total).collect();
            let len = shadow.len();
            return Ok(self.push_shadowed(vec![len], shadow, Op::Softmax { x }));
        }
        let max = xv.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let exps: Vec<f64> = xv.iter().map(|&v| f64::from(v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let value: Vec<f32> = exps.iter().map(|&e| (e / total) as f32).collect();
        Ok(self.push(vec![value.len()], value, Op::Softmax { x }))
    }

    /// Records `ln p[index]` for a rank-1 probability vector `probs`.
    ///
    /// The picked probability must be strictly positive.
    pub fn log_pick(&mut self, probs: ValueId, index: usize) -> Result<ValueId, TapeError> {
        let pv = &self.nodes[probs.0].value;
        if index >= pv.len() {
            return Err(TapeError::IndexOutOfRange { op: "log_pick", index, len: pv.len() });
        }
        let p = pv[index];
        if !(p > 0.0 && p.is_finite()) {
            return Err(TapeError::NonFinite { op: "log_pick" });
        }
        let precise_p = match &self.nodes[probs.0].shadow {
            Some(shadow) => shadow[index],
            None => f64::from(p),
        };
        Ok(self.push_scalar(precise_p.ln(), Op::LogPick { probs, index }))
    }

    /// Records a masked mean squared error between `pred` and `target`.
    ///
    /// `mask` entries must be exactly `0.0` (excluded) or `1.0` (included);
    /// the mean is over included elements only. Gradient flows to `pred`
    /// alone — `target` is treated as a constant even if it has history.
    pub fn mse(
        &mut self,
        pred: ValueId,
        target: ValueId,
        mask: Option<&[f32]>,
    ) -> Result<ValueId, TapeError> {
        let n = self.nodes[pred.0].value.len();
        if n == 0 || n != self.nodes[target.0].value.len() {
            return Err(TapeError::ShapeMismatch {
                op: "mse",
                details: format!(
                    "pred has {n} values, target has {}",
                    self.nodes[target.0].value.len()
                ),
            });
        }
        let count = match mask {
            Some(m) => {
                if m.len() != n || m.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(TapeError::InvalidMask);
                }
                let ones = m.iter().filter(|&&v| v == 1.0).count();
                if ones == 0 {
                    return Err(TapeError::InvalidMask);
                }
                ones
            }
            None => n,
        };
        let mut acc = 0.0f64;
        if self.precise {
            let pv = self.shadow_of(pred);
            let tv = self.shadow_of(target);
            for k in 0..n {
                if mask.map_or(1.0, |m| m[k]) == 1.0 {
                    let d = pv[k] - tv[k];
                    acc += d * d;
                }
            }
        } else {
            let pv = &self.nodes[pred.0].value;
            let tv = &self.nodes[target.0].value;
            for k in 0..n {
                if mask.map_or(1.0, |m| m[k]) == 1.0 {
                    let d = f64::from(pv[k]) - f64::from(tv[k]);
                    acc += d * d;
                }
            }
        }
        Ok(self.push_scalar(
            acc / count as f64,
            Op::Mse { pred, target, mask: mask.map(<[f32]>::to_vec) },
        ))
    }

    /// Records `base` with rank-1 `spans` written over it at the given
    /// offsets. Spans must not overlap; each output element is owned by
    /// `base` or by exactly one span, and gradients route accordingly —
    /// `base` receives exactly zero gradient at pasted offsets.
    pub fn paste(
        &mut self,
        base: ValueId,
        spans: &[(usize, ValueId)],
    ) -> Result<ValueId, TapeError> {
        let len = self.nodes[base.0].value.len();
        let mut owned = vec![false; len];
        for &(offset, src) in spans {
            let src_len = self.nodes[src.0].value.len();
            if offset.checked_add(src_len).is_none_or(|end| end > len) {
                return Err(TapeError::IndexOutOfRange { op: "paste", index: offset, len });
            }
            for slot in &mut owned[offset..offset + src_len] {
                if *slot {
                    return Err(TapeError::OverlappingSpans { offset });
                }
                *slot = true;
            }
        }
        let shape = self.nodes[base.0].shape.clone();
        if self.precise {
            let mut shadow = self.shadow_of(base);
            for &(offset, src) in spans {
                let src_vals = self.shadow_of(src);
                shadow[offset..offset + src_vals.len()].copy_from_slice(&src_vals);
            }
            return Ok(self.push_shadowed(shape, shadow, Op::Paste { base, spans: spans.to_vec() }));
        }
        let mut value = self.nodes[base.0].value.clone();
        for &(offset, src) in spans {
            let src_vals = self.nodes[src.0].value.clone();
            value[offset..offset + src_vals.len()].copy_from_slice(&src_vals);
        }
        Ok(self.push(shape, value, Op::Paste { base, spans: spans.to_vec() }))
    }

    fn check_same_shape(&self, op: &'static str, a: ValueId, b: ValueId) -> Result<(), TapeError> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(TapeError::ShapeMismatch {
                op,
                details: format!(
                    "{:?} vs {:?}",
                    self.nodes[a.0].shape, self.nodes[b.0].shape
                ),
            });
        }
        Ok(())
    }

    /// Runs the backward sweep from one or more scalar roots and returns the
    /// accumulated parameter gradients.
    ///
    /// Each root contributes `seed` as the gradient of its node; where flows
    /// meet (for example a reconstruction loss and action log-probabilities
    /// that share the recurrent state), they sum. `params` must hold the same
    /// values as during recording.
    ///
    /// Gradients with respect to non-parameter nodes are retained and can be
    /// inspected afterwards with [`Tape::grad`].
    pub fn backward(
        &mut self,
        roots: &[(ValueId, f32)],
        params: &ParamStore,
    ) -> Result<Gradients, TapeError> {
        self.backward_filtered(roots, params, &|_| true)
    }

    /// Like [`Tape::backward`], but only materialises gradients for
    /// parameters where `keep` returns `true`.
    ///
    /// Gradient flow *through* the associated operations is unaffected; this
    /// only skips the per-parameter accumulation, which is the dominant cost
    /// when most parameters are frozen.
    pub fn backward_filtered(
        &mut self,
        roots: &[(ValueId, f32)],
        params: &ParamStore,
        keep: &dyn Fn(&str) -> bool,
    ) -> Result<Gradients, TapeError> {
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; self.nodes.len()];
        for &(root, seed) in roots {
            let node = &self.nodes[root.0];
            if node.value.len() != 1 {
                return Err(TapeError::RootNotScalar { shape: node.shape.clone() });
            }
            grads[root.0].get_or_insert_with(|| vec![0.0])[0] += seed;
        }

        let mut out = Gradients::new();
        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Affine { x, w, b } => {
                    let wt = params
                        .get(w)
                        .ok_or_else(|| TapeError::UnknownParam(w.clone()))?;
                    let (rows, cols) = (wt.shape()[0], wt.shape()[1]);
                    let wd = wt.data();
                    let xv = &self.nodes[x.0].value;
                    {
                        let gx = slot(&mut grads, x.0, cols);
                        for i in 0..rows {
                            let gi = g[i];
                            if gi != 0.0 {
                                let row = &wd[i * cols..(i + 1) * cols];
                                for (dst, &wij) in gx.iter_mut().zip(row) {
                                    *dst += wij * gi;
                                }
                            }
                        }
                    }
                    if keep(w) {
                        let mut gw = vec![0.0f32; rows * cols];
                        for i in 0..rows {
                            let gi = g[i];
                            if gi != 0.0 {
                                let row = &mut gw[i * cols..(i + 1) * cols];
                                for (dst, &xj) in row.iter_mut().zip(xv) {
                                    *dst += gi * xj;
                                }
                            }
                        }
                        out.add(w, TensorValue::new(vec![rows, cols], gw));
                    }
                    if keep(b) {
                        out.add(b, TensorValue::vector(g.clone()));
                    }
                }
                Op::Activation { x, kind } => {
                    let y = &self.nodes[i].value;
                    let gx = slot(&mut grads, x.0, y.len());
                    match kind {
                        Activation::Tanh => {
                            for k in 0..y.len() {
                                gx[k] += g[k] * (1.0 - y[k] * y[k]);
                            }
                        }
                        Activation::Relu => {
                            for k in 0..y.len() {
                                if y[k] > 0.0 {
                                    gx[k] += g[k];
                                }
                            }
                        }
                        Activation::Sigmoid => {
                            for k in 0..y.len() {
                                gx[k] += g[k] * y[k] * (1.0 - y[k]);
                            }
                        }
                    }
                }
                Op::Add { a, b } => {
                    let n = g.len();
                    for id in [*a, *b] {
                        let gx = slot(&mut grads, id.0, n);
                        for k in 0..n {
                            gx[k] += g[k];
                        }
                    }
                }
                Op::Mul { a, b } => {
                    let (a, b) = (*a, *b);
                    let n = g.len();
                    let bv = self.nodes[b.0].value.clone();
                    let av = &self.nodes[a.0].value;
                    {
                        let ga = slot(&mut grads, a.0, n);
                        for k in 0..n {
                            ga[k] += g[k] * bv[k];
                        }
                    }
                    let av = av.clone();
                    let gb = slot(&mut grads, b.0, n);
                    for k in 0..n {
                        gb[k] += g[k] * av[k];
                    }
                }
                Op::Concat { a, b } => {
                    let (a, b) = (*a, *b);
                    let split = self.nodes[a.0].value.len();
                    {
                        let ga = slot(&mut grads, a.0, split);
                        for k in 0..split {
                            ga[k] += g[k];
                        }
                    }
                    let blen = self.nodes[b.0].value.len();
                    let gb = slot(&mut grads, b.0, blen);
                    for k in 0..blen {
                        gb[k] += g[split + k];
                    }
                }
                Op::Sum { x } => {
                    let n = self.nodes[x.0].value.len();
                    let gx = slot(&mut grads, x.0, n);
                    for v in gx.iter_mut() {
                        *v += g[0];
                    }
                }
                Op::Scale { x, c } => {
                    let (x, c) = (*x, *c);
                    let gx = slot(&mut grads, x.0, g.len());
                    for k in 0..g.len() {
                        gx[k] += c * g[k];
                    }
                }
                Op::Softmax { x } => {
                    let p = &self.nodes[i].value;
                    let mut dot = 0.0f64;
                    for k in 0..p.len() {
                        dot += f64::from(g[k]) * f64::from(p[k]);
                    }
                    let x = *x;
                    let p = p.clone();
                    let gx = slot(&mut grads, x.0, p.len());
                    for k in 0..p.len() {
                        gx[k] += p[k] * (g[k] - dot as f32);
                    }
                }
                Op::LogPick { probs, index } => {
                    let (probs, index) = (*probs, *index);
                    let p = self.nodes[probs.0].value[index];
                    let n = self.nodes[probs.0].value.len();
                    let gp = slot(&mut grads, probs.0, n);
                    gp[index] += g[0] / p;
                }
                Op::Mse { pred, target, mask } => {
                    let (pred, target) = (*pred, *target);
                    let mask = mask.clone();
                    let n = self.nodes[pred.0].value.len();
                    let count = mask
                        .as_ref()
                        .map_or(n, |m| m.iter().filter(|&&v| v == 1.0).count());
                    let scale = 2.0 * g[0] / count as f32;
                    let tv = self.nodes[target.0].value.clone();
                    let pv = &self.nodes[pred.0].value;
                    let diffs: Vec<f32> = pv.iter().zip(&tv).map(|(&p, &t)| p - t).collect();
                    let gp = slot(&mut grads, pred.0, n);
                    for k in 0..n {
                        let keep = mask.as_ref().map_or(1.0, |m| m[k]);
                        if keep == 1.0 {
                            gp[k] += scale * diffs[k];
                        }
                    }
                }
                Op::Paste { base, spans } => {
                    let base = *base;
                    let spans = spans.clone();
                    let n = g.len();
                    {
                        // Base owns every element outside the spans; pasted
                        // offsets contribute exactly zero to it.
                        let mut gb = g.clone();
                        for &(offset, src) in &spans {
                            let src_len = self.nodes[src.0].value.len();
                            gb[offset..offset + src_len].fill(0.0);
                        }
                        let gbase = slot(&mut grads, base.0, n);
                        for k in 0..n {
                            gbase[k] += gb[k];
                        }
                    }
                    for &(offset, src) in &spans {
                        let src_len = self.nodes[src.0].value.len();
                        let gs = slot(&mut grads, src.0, src_len);
                        for k in 0..src_len {
                            gs[k] += g[offset + k];
                        }
                    }
                }
            }
            grads[i] = Some(g);
        }
        self.saved_grads = grads;
        Ok(out)
    }
}

/// Lazily allocates and returns the gradient buffer for node `idx`.
fn slot(grads: &mut [Option<Vec<f32>>], idx: usize, len: usize) -> &mut [f32] {
    grads[idx].get_or_insert_with(|| vec![0.0; len])
}

/// Sum of a slice with `f64` accumulation in index order.
fn sum_f64(values: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for &v in values {
        acc += f64::from(v);
    }
    acc
}

/// Dot product with four independent `f64` accumulators.
///
/// The fixed association order makes the result deterministic while keeping
/// the loop wide enough for the compiler to vectorise.
fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let n4 = a.len() & !3;
    let mut i = 0;
    while i < n4 {
        acc[0] += f64::from(a[i]) * f64::from(b[i]);
        acc[1] += f64::from(a[i + 1]) * f64::from(b[i + 1]);
        acc[2] += f64::from(a[i + 2]) * f64::from(b[i + 2]);
        acc[3] += f64::from(a[i + 3]) * f64::from(b[i + 3]);
        i += 4;
    }
    let mut tail = 0.0f64;
    for k in i..a.len() {
        tail += f64::from(a[k]) * f64::from(b[k]);
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Draws an index from a rank-1 probability vector by inverse CDF and
/// records `ln p[index]` on the tape.
///
/// The vector must be non-negative and sum to 1 within `1e-5`.
pub fn categorical_sample(
    tape: &mut Tape,
    probs: ValueId,
    rng: &mut impl Rng,
) -> Result<(usize, ValueId), TapeError> {
    let p = tape.value(probs);
    if p.is_empty() {
        return Err(TapeError::ShapeMismatch {
            op: "categorical_sample",
            details: "empty distribution".to_string(),
        });
    }
    if p.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(TapeError::NonFinite { op: "categorical_sample" });
    }
    let sum: f64 = p.iter().map(|&v| f64::from(v)).sum();
    if (sum - 1.0).abs() > 1e-5 {
        return Err(TapeError::NotNormalized { sum });
    }
    let u: f32 = rng.random();
    let mut cum = 0.0f32;
    let mut index = p.len() - 1;
    for (k, &pk) in p.iter().enumerate() {
        cum += pk;
        if u < cum {
            index = k;
            break;
        }
    }
    // Rounding can leave the picked tail bucket at exactly zero probability;
    // fall back to the nearest earlier positive entry so log_pick is defined.
    while index > 0 && p[index] <= 0.0 {
        index -= 1;
    }
    let logp = tape.log_pick(probs, index)?;
    Ok((index, logp))
}

/// Records one LSTM step composed from tape primitives.
///
/// Gate parameters are read from `params` under `{prefix}.{i,f,g,o}.{w,b}`,
/// each an affine map over `concat(x, h)`. Returns the new `(h, c)` pair.
pub fn lstm_step(
    tape: &mut Tape,
    x: ValueId,
    h: ValueId,
    c: ValueId,
    params: &ParamStore,
    prefix: &str,
) -> Result<(ValueId, ValueId), TapeError> {
    let z = tape.concat(x, h)?;
    let gate = |tape: &mut Tape, name: &str, act: Activation| -> Result<ValueId, TapeError> {
        let w = format!("{prefix}.{name}.w");
        let b = format!("{prefix}.{name}.b");
        let lin = tape.affine(z, &w, &b, params)?;
        Ok(tape.activation(lin, act))
    };
    let i = gate(tape, "i", Activation::Sigmoid)?;
    let f = gate(tape, "f", Activation::Sigmoid)?;
    let g = gate(tape, "g", Activation::Tanh)?;
    let o = gate(tape, "o", Activation::Sigmoid)?;
    let fc = tape.mul(f, c)?;
    let ig = tape.mul(i, g)?;
    let c_next = tape.add(fc, ig)?;
    let c_act = tape.activation(c_next, Activation::Tanh);
    let h_next = tape.mul(o, c_act)?;
    Ok((h_next, c_next))
}
