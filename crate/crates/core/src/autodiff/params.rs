use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named, shaped tensor of learnable (or frozen) values.
///
/// Matrices are stored row-major; a shape `[m, n]` has `m` rows of `n` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
    trainable: bool,
}

impl Parameter {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of rows: first dimension for matrices, 1 for vectors.
    pub fn rows(&self) -> usize {
        match self.shape.as_slice() {
            [_] => 1,
            [m, _] => *m,
            _ => unreachable!("parameters are 1- or 2-dimensional"),
        }
    }

    /// Number of columns: second dimension for matrices, length for vectors.
    pub fn cols(&self) -> usize {
        match self.shape.as_slice() {
            [n] => *n,
            [_, n] => *n,
            _ => unreachable!("parameters are 1- or 2-dimensional"),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.cols();
        &self.data[i * n..(i + 1) * n]
    }
}

/// Owns every parameter of a model, addressable by [`ParamId`] or by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Names must be unique; shapes must be 1- or 2-D and
    /// match the data length.
    pub fn add(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        data: Vec<f64>,
        trainable: bool,
    ) -> Result<ParamId, ModelError> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(ModelError::DuplicateParameter(name));
        }
        if shape.is_empty() || shape.len() > 2 || shape.iter().product::<usize>() != data.len() {
            return Err(ModelError::ShapeMismatch {
                name,
                expected: shape,
                found: data.len(),
            });
        }
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter {
            name,
            shape,
            data,
            trainable,
        });
        Ok(id)
    }

    pub fn zeros(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        trainable: bool,
    ) -> Result<ParamId, ModelError> {
        let len = shape.iter().product();
        self.add(name, shape, vec![0.0; len], trainable)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar values across all parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(Parameter::len).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }
}

/// Per-parameter gradient accumulators, allocated on first touch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    slots: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn new(store: &ParamStore) -> Self {
        Self {
            slots: vec![None; store.len()],
        }
    }

    pub(crate) fn slot_mut(&mut self, id: ParamId, len: usize) -> &mut [f64] {
        if self.slots.len() <= id.0 {
            self.slots.resize(id.0 + 1, None);
        }
        self.slots[id.0].get_or_insert_with(|| vec![0.0; len])
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.slots.get(id.0).and_then(|s| s.as_deref())
    }

    /// Gradient at a single coordinate, zero when the parameter was never reached.
    pub fn at(&self, id: ParamId, index: usize) -> f64 {
        self.get(id).map_or(0.0, |g| g[index])
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_deref().map(|g| (ParamId(i), g)))
    }

    /// Adds `other` into `self`.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (id, g) in other.iter() {
            let slot = self.slot_mut(id, g.len());
            for (a, b) in slot.iter_mut().zip(g) {
                *a += b;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.iter()
            .flat_map(|(_, g)| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|(_, g)| g.iter().all(|v| v.is_finite()))
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.slots.iter_mut().flatten() {
            g.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Rescales so the global L2 norm does not exceed `max_norm`. Returns the
    /// norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_are_rejected() {
        let mut store = ParamStore::new();
        store.zeros("w", vec![2, 2], true).unwrap();
        assert!(matches!(
            store.zeros("w", vec![3], true),
            Err(ModelError::DuplicateParameter(_))
        ));
    }

    #[test]
    fn shape_must_match_data() {
        let mut store = ParamStore::new();
        assert!(store.add("w", vec![2, 3], vec![0.0; 5], true).is_err());
        assert!(store.add("v", vec![1, 2, 3], vec![0.0; 6], true).is_err());
    }

    #[test]
    fn rows_and_columns() {
        let mut store = ParamStore::new();
        let w = store
            .add("w", vec![2, 3], (0..6).map(f64::from).collect(), true)
            .unwrap();
        let p = store.get(w);
        assert_eq!((p.rows(), p.cols()), (2, 3));
        assert_eq!(p.row(1), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn clipping_caps_the_norm() {
        let mut store = ParamStore::new();
        let w = store.zeros("w", vec![2], true).unwrap();
        let mut grads = Gradients::new(&store);
        grads.slot_mut(w, 2).copy_from_slice(&[3.0, 4.0]);
        let before = grads.clip_global_norm(1.0);
        assert_eq!(before, 5.0);
        assert!((grads.global_norm() - 1.0).abs() < 1e-12);
    }
}
