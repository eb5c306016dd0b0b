//! Named parameter storage. Initialization is seeded per name, so the set of
//! parameters a model creates and the order it creates them in never change
//! the initial values.

use super::fd::fnv;
use super::{Grads, Tape, Tensor};
use crate::error::{Error, Result};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Ones,
    /// Zero-mean gaussian with the given standard deviation.
    Normal(f64),
}

#[derive(Debug, Clone)]
pub(crate) struct Param {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ParamStore {
    seed: u64,
    pub(crate) params: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        ParamStore { seed, params: BTreeMap::new() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.params.values().map(|p| p.data.len()).sum()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn shape(&self, name: &str) -> Option<&[usize]> {
        self.params.get(name).map(|p| p.shape.as_slice())
    }

    pub fn values(&self, name: &str) -> Option<&[f64]> {
        self.params.get(name).map(|p| p.data.as_slice())
    }

    pub fn values_mut(&mut self, name: &str) -> Option<&mut Vec<f64>> {
        self.params.get_mut(name).map(|p| &mut p.data)
    }

    pub fn insert_raw(&mut self, name: String, shape: Vec<usize>, data: Vec<f64>) -> Result<()> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Checkpoint(format!("param {name}: shape {shape:?} vs {} values", data.len())));
        }
        self.params.insert(name, Param { shape, data });
        Ok(())
    }

    /// Fetches a parameter, creating it deterministically on first use.
    pub fn get_or_init(&mut self, name: &str, shape: &[usize], init: Init) -> Result<(&[usize], &[f64])> {
        if !self.params.contains_key(name) {
            let n: usize = shape.iter().product();
            let data = match init {
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
                Init::Normal(std) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv(name));
                    let dist = Normal::new(0.0, std).expect("finite std");
                    (0..n).map(|_| dist.sample(&mut rng)).collect()
                }
            };
            self.params.insert(name.to_string(), Param { shape: shape.to_vec(), data });
        }
        let p = &self.params[name];
        if p.shape != shape {
            return Err(Error::Checkpoint(format!(
                "param {name}: requested shape {shape:?}, stored {:?}",
                p.shape
            )));
        }
        Ok((&p.shape, &p.data))
    }
}

/// Ties parameters to tape leaves for one forward pass and collects their
/// gradients afterwards.
pub struct Binder<'t> {
    tape: &'t Tape,
    bound: Vec<(String, Tensor)>,
}

impl<'t> Binder<'t> {
    pub fn new(tape: &'t Tape) -> Self {
        Binder { tape, bound: Vec::new() }
    }

    pub fn bind(&mut self, store: &mut ParamStore, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        if let Some((_, t)) = self.bound.iter().find(|(n, _)| n == name) {
            return Ok(t.clone());
        }
        let (shape, data) = store.get_or_init(name, shape, init)?;
        let leaf = self.tape.leaf(shape, data.to_vec())?;
        self.bound.push((name.to_string(), leaf.clone()));
        Ok(leaf)
    }

    pub fn bound_names(&self) -> impl Iterator<Item = &str> {
        self.bound.iter().map(|(n, _)| n.as_str())
    }

    /// Parameter gradients by name; parameters the loss never touched are
    /// reported as absent rather than zero.
    pub fn collect(&self, grads: &Grads) -> BTreeMap<String, Vec<f64>> {
        let mut out = BTreeMap::new();
        for (name, tensor) in &self.bound {
            if let Some(g) = grads.wrt(tensor) {
                out.insert(name.clone(), g.to_vec());
            }
        }
        out
    }
}
