use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::{Float, Tensor};

/// Index of a named tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedParam {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<Float>,
}

/// Flat, ordered collection of trainable tensors. Shared layers hold the
/// same [`ParamId`], so each tensor is stored (and counted) once.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn normal<R: Rng + ?Sized>(&mut self, name: impl Into<String>, shape: &[usize], rng: &mut R) -> ParamId {
        self.add(name, Tensor::randn(shape, 0.02, rng))
    }

    pub fn zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn ones(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        self.add(name, Tensor::full(shape, 1.0))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// All parameter values concatenated in store order.
    pub fn flat(&self) -> Vec<Float> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn to_named(&self) -> Vec<NamedParam> {
        self.names
            .iter()
            .zip(&self.tensors)
            .map(|(name, t)| NamedParam {
                name: name.clone(),
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect()
    }

    /// Overwrites values from `named`; every stored name must be present
    /// with a matching shape.
    pub fn load_named(&mut self, named: &[NamedParam]) -> Result<(), String> {
        let by_name: BTreeMap<&str, &NamedParam> = named.iter().map(|p| (p.name.as_str(), p)).collect();
        if by_name.len() != self.names.len() {
            return Err(format!("expected {} parameters, found {}", self.names.len(), by_name.len()));
        }
        for (name, t) in self.names.iter().zip(self.tensors.iter_mut()) {
            let p = by_name.get(name.as_str()).ok_or_else(|| format!("missing parameter {name}"))?;
            if p.shape != t.shape() {
                return Err(format!("parameter {name}: shape {:?}, expected {:?}", p.shape, t.shape()));
            }
            *t = Tensor::new(&p.shape, p.data.clone()).map_err(|e| format!("parameter {name}: {e}"))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn add_find_and_round_trip() {
        let mut s = ParamStore::new();
        let mut r = rng::stream(1, &[]);
        let w = s.normal("w", &[3, 2], &mut r);
        let b = s.zeros("b", &[2]);
        assert_eq!(s.find("b"), Some(b));
        assert_eq!(s.num_scalars(), 8);
        assert_eq!(s.name(w), "w");
        let saved = s.to_named();
        let mut t = s.clone();
        t.get_mut(w).data_mut()[0] = 5.0;
        t.load_named(&saved).unwrap();
        assert_eq!(t, s);
        assert!(t.load_named(&saved[..1]).is_err());
    }
}
