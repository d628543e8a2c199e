//! Named parameter storage and gradient accumulators.

use indexmap::IndexMap;

use super::TensorValue;

/// All trainable parameters of a model, addressed by name.
///
/// Names are dotted paths such as `agg.f.w` or `decode.out.b`. Insertion
/// order is preserved and is the canonical iteration order everywhere —
/// optimizer updates, checkpoint serialization, and digests all walk the
/// store in this order, which keeps every run of the same binary
/// bit-identical.
///
/// Each parameter may carry a velocity buffer of the same shape, used by
/// momentum SGD and persisted alongside the parameter in checkpoints.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: IndexMap<String, TensorValue>,
    velocity: IndexMap<String, TensorValue>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a parameter.
    ///
    /// # Panics
    ///
    /// Panics if `name` is already present; parameter layouts are fixed at
    /// model construction, so a duplicate is a programming error.
    pub fn insert(&mut self, name: impl Into<String>, value: TensorValue) {
        let name = name.into();
        let prev = self.params.insert(name.clone(), value);
        assert!(prev.is_none(), "duplicate parameter {name:?}");
    }

    /// Removes a parameter (and any velocity buffer), returning its value.
    pub fn remove(&mut self, name: &str) -> Option<TensorValue> {
        self.velocity.shift_remove(name);
        self.params.shift_remove(name)
    }

    pub fn get(&self, name: &str) -> Option<&TensorValue> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut TensorValue> {
        self.params.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    /// Parameters in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &TensorValue)> {
        self.params.iter().map(|(n, v)| (n.as_str(), v))
    }

    /// Parameter names in insertion order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar values across all parameters.
    pub fn value_count(&self) -> usize {
        self.params.values().map(TensorValue::len).sum()
    }

    /// The velocity buffer for `name`, if one has been created.
    pub fn velocity(&self, name: &str) -> Option<&TensorValue> {
        self.velocity.get(name)
    }

    /// The velocity buffer for `name`, created as zeros on first access.
    ///
    /// # Panics
    ///
    /// Panics if `name` is not a parameter.
    pub fn velocity_mut(&mut self, name: &str) -> &mut TensorValue {
        let shape = self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("velocity for unknown parameter {name:?}"))
            .shape()
            .to_vec();
        self.velocity
            .entry(name.to_string())
            .or_insert_with(|| TensorValue::zeros(shape))
    }

    /// Installs a velocity buffer, e.g. when restoring from a checkpoint.
    ///
    /// # Panics
    ///
    /// Panics if `name` is not a parameter or `value` has the wrong shape.
    pub fn set_velocity(&mut self, name: &str, value: TensorValue) {
        let param = self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("velocity for unknown parameter {name:?}"));
        assert_eq!(param.shape(), value.shape(), "velocity shape mismatch for {name:?}");
        self.velocity.insert(name.to_string(), value);
    }

    /// Resets the velocity of `name` to zeros if a buffer exists.
    pub fn zero_velocity(&mut self, name: &str) {
        if let Some(v) = self.velocity.get_mut(name) {
            v.data_mut().fill(0.0);
        }
    }

    /// Names that currently carry a velocity buffer, in insertion order.
    pub fn velocity_names(&self) -> impl Iterator<Item = &str> {
        self.velocity.keys().map(String::as_str)
    }

    /// An order-sensitive digest of names, shapes, and exact value bits.
    ///
    /// Used to assert that a store was not modified across a section that
    /// promises to leave it untouched (for example, evaluation runs that
    /// share one model across several policies).
    pub fn digest(&self) -> u64 {
        // FNV-1a over a canonical byte walk of the store.
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h = OFFSET;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(PRIME);
            }
        };
        for (name, value) in &self.params {
            eat(name.as_bytes());
            eat(&[0xff]);
            for &d in value.shape() {
                eat(&(d as u64).to_le_bytes());
            }
            for &x in value.data() {
                eat(&x.to_bits().to_le_bytes());
            }
        }
        h
    }
}

/// Gradients accumulated by a backward pass, addressed by parameter name.
///
/// Also used as a batch accumulator: sum several episodes' gradients with
/// [`Gradients::accumulate`], then divide by the batch size with
/// [`Gradients::scale`].
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    grads: IndexMap<String, TensorValue>,
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&TensorValue> {
        self.grads.get(name)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &TensorValue)> {
        self.grads.iter().map(|(n, v)| (n.as_str(), v))
    }

    /// Adds `delta` into the gradient for `name`, creating it if absent.
    ///
    /// # Panics
    ///
    /// Panics on shape mismatch with an existing entry.
    pub fn add(&mut self, name: &str, delta: TensorValue) {
        match self.grads.get_mut(name) {
            Some(g) => {
                assert_eq!(g.shape(), delta.shape(), "gradient shape mismatch for {name:?}");
                for (a, b) in g.data_mut().iter_mut().zip(delta.data()) {
                    *a += b;
                }
            }
            None => {
                self.grads.insert(name.to_string(), delta);
            }
        }
    }

    /// Element-wise sum with another gradient set.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (name, delta) in other.iter() {
            self.add(name, delta.clone());
        }
    }

    /// Multiplies every gradient by `c`.
    pub fn scale(&mut self, c: f32) {
        for value in self.grads.values_mut() {
            for x in value.data_mut() {
                *x *= c;
            }
        }
    }

    /// Ensures an all-zero entry exists for `name` (used to hand the
    /// optimizer explicit zeros for frozen parameters).
    pub fn ensure_zero(&mut self, name: &str, shape: &[usize]) {
        if !self.grads.contains_key(name) {
            self.grads
                .insert(name.to_string(), TensorValue::zeros(shape.to_vec()));
        }
    }
}
