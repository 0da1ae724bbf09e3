use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Option<Tensor<T>>,
    /// `false` for buffers such as batch-norm running statistics.
    pub trainable: bool,
}

/// Named tensors of a model in creation order. Trainable parameters and
/// non-trainable buffers share one namespace.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterStore<T> {
    entries: Vec<Entry<T>>,
    by_name: BTreeMap<String, usize>,
}

impl<T: Scalar> Default for ParameterStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
            by_name: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, value: Tensor<T>, trainable: bool) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::DuplicateName(name.to_string()));
        }
        self.entries.push(Entry {
            name: name.to_string(),
            value,
            grad: None,
            trainable,
        });
        let id = self.entries.len() - 1;
        self.by_name.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    pub fn add_param(&mut self, name: &str, value: Tensor<T>) -> Result<ParamId> {
        self.insert(name, value, true)
    }

    pub fn add_buffer(&mut self, name: &str, value: Tensor<T>) -> Result<ParamId> {
        self.insert(name, value, false)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn get(&self, name: &str) -> Option<&Entry<T>> {
        self.id(name).map(|id| &self.entries[id.0])
    }

    pub fn entry(&self, id: ParamId) -> &Entry<T> {
        &self.entries[id.0]
    }

    pub fn entry_mut(&mut self, id: ParamId) -> &mut Entry<T> {
        &mut self.entries[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Entry<T>)> {
        self.entries.iter().enumerate().map(|(i, e)| (ParamId(i), e))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Entry<T>> {
        self.entries.iter_mut()
    }

    pub fn trainable(&self) -> impl Iterator<Item = (ParamId, &Entry<T>)> {
        self.iter().filter(|(_, e)| e.trainable)
    }

    /// Element count over trainable tensors; buffers excluded.
    pub fn count_trainable(&self) -> usize {
        self.trainable().map(|(_, e)| e.value.numel()).sum()
    }

    pub fn zero_grads(&mut self) {
        self.entries.iter_mut().for_each(|e| e.grad = None);
    }

    pub fn cast<U: Scalar>(&self) -> ParameterStore<U> {
        ParameterStore {
            entries: self
                .entries
                .iter()
                .map(|e| Entry {
                    name: e.name.clone(),
                    value: e.value.cast(),
                    grad: e.grad.as_ref().map(Tensor::cast),
                    trainable: e.trainable,
                })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_unique_and_ordered() {
        let mut s = ParameterStore::<f32>::new();
        s.add_param("b.weight", Tensor::zeros(&[2, 3])).unwrap();
        s.add_buffer("a.running_mean", Tensor::zeros(&[2])).unwrap();
        assert!(matches!(
            s.add_param("b.weight", Tensor::zeros(&[1])),
            Err(Error::DuplicateName(_))
        ));
        let names: Vec<_> = s.iter().map(|(_, e)| e.name.as_str()).collect();
        assert_eq!(names, ["b.weight", "a.running_mean"]);
        assert_eq!(s.count_trainable(), 6);
    }
}
