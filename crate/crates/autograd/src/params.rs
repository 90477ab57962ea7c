use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;

use crate::tensor::Tensor;

/// Named trainable parameters plus non-trainable buffers (normalization
/// running statistics). Names are dotted paths; the first segment is the
/// parameter group.
#[derive(Clone, Default, Debug)]
pub struct ParamStore {
    params: BTreeMap<String, Arc<Tensor>>,
    buffers: BTreeMap<String, Tensor>,
}

/// First dotted segment of a parameter name.
pub fn group_of(name: &str) -> &str {
    name.split('.').next().unwrap_or(name)
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        assert!(
            !self.params.contains_key(&name),
            "parameter `{name}` registered twice"
        );
        self.params.insert(name, Arc::new(value));
    }

    pub fn insert_buffer(&mut self, name: impl Into<String>, value: Tensor) {
        self.buffers.insert(name.into(), value);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name).map(|p| p.as_ref())
    }

    pub fn value_arc(&self, name: &str) -> Option<Arc<Tensor>> {
        self.params.get(name).cloned()
    }

    /// Mutable access; clones the storage if a graph still holds it.
    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name).map(Arc::make_mut)
    }

    pub fn set(&mut self, name: &str, value: Tensor) {
        let slot = self
            .params
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"));
        assert_eq!(slot.shape(), value.shape(), "shape change for `{name}`");
        *slot = Arc::new(value);
    }

    pub fn buffer(&self, name: &str) -> Option<&Tensor> {
        self.buffers.get(name)
    }

    pub fn set_buffer(&mut self, name: &str, value: Tensor) {
        self.buffers.insert(name.to_string(), value);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|k| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v.as_ref()))
    }

    pub fn buffers(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.buffers.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Names belonging to `group`.
    pub fn group_names(&self, group: &str) -> Vec<String> {
        self.params
            .keys()
            .filter(|k| group_of(k) == group)
            .cloned()
            .collect()
    }

    /// Distinct group names in sorted order.
    pub fn groups(&self) -> Vec<String> {
        self.params
            .keys()
            .map(|k| group_of(k).to_string())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.numel()).sum()
    }

    /// Whether the named storage is shared with some other holder (a graph).
    pub fn is_shared(&self, name: &str) -> bool {
        self.params.get(name).is_some_and(|p| Arc::strong_count(p) > 1)
    }

    /// Pointer identity of the parameter storage.
    pub fn storage_id(&self, name: &str) -> Option<*const Tensor> {
        self.params.get(name).map(Arc::as_ptr)
    }
}

/// He-uniform initialization for a weight with the given fan-in.
pub fn he_uniform(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
}
