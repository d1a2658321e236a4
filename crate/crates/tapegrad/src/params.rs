use std::collections::BTreeMap;

use crate::Mat;

/// Handle to one named parameter matrix inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(&self) -> usize {
        self.0
    }
}

/// Ordered store of named parameter matrices.
///
/// Insertion order is the canonical order: optimizers, checkpoints and
/// gradient maps all index by it, which keeps every run of the same
/// construction code bit-for-bit aligned.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Mat>,
    by_name: BTreeMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a parameter. Panics on duplicate names: parameter naming is a
    /// construction-time invariant, not a runtime condition.
    pub fn add(&mut self, name: &str, value: Mat) -> ParamId {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter name: {name}"
        );
        let idx = self.values.len();
        self.names.push(name.to_string());
        self.values.push(value);
        self.by_name.insert(name.to_string(), idx);
        ParamId(idx)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Mat {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Mat)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.values.iter())
    }

    /// Sum of squared entries over a group of parameters.
    pub fn squared_norm(&self, group: &[ParamId]) -> f64 {
        group
            .iter()
            .map(|id| self.values[id.0].iter().map(|x| x * x).sum::<f64>())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn add_and_lookup() {
        let mut store = ParamSet::new();
        let a = store.add("w", array![[1.0, 2.0]]);
        let b = store.add("b", array![[0.5]]);
        assert_eq!(store.len(), 2);
        assert_eq!(store.name(a), "w");
        assert_eq!(store.id("b"), Some(b));
        assert_eq!(store.value(b)[[0, 0]], 0.5);
        assert!(store.id("missing").is_none());
    }

    #[test]
    #[should_panic(expected = "duplicate parameter name")]
    fn duplicate_names_rejected() {
        let mut store = ParamSet::new();
        store.add("w", array![[1.0]]);
        store.add("w", array![[2.0]]);
    }
}
