use rand::Rng;
use serde::{Deserialize, Serialize};

use super::arch::Architecture;
use crate::error::{Error, Result};
use crate::rng::rng_from;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// One weight/bias pair per layer (empty for parameter-free layers). Used for
/// weights, gradients and optimizer moments alike.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub layers: Vec<LayerParams>,
}

impl ParamSet {
    pub fn zeros(arch: &Architecture) -> Self {
        Self {
            layers: arch
                .layers
                .iter()
                .map(|l| {
                    let (w, b) = l.param_shape();
                    LayerParams {
                        weights: vec![0.0; w],
                        bias: vec![0.0; b],
                    }
                })
                .collect(),
        }
    }

    pub fn zeros_like(other: &ParamSet) -> Self {
        Self {
            layers: other
                .layers
                .iter()
                .map(|l| LayerParams {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    /// Uniform weights in `±√(6 / fan_in)`, zero biases.
    pub fn random_uniform(arch: &Architecture, seed: u64) -> Self {
        let mut rng = rng_from(seed);
        let mut set = Self::zeros(arch);
        for (spec, lp) in arch.layers.iter().zip(&mut set.layers) {
            let fan_in = spec.fan_in();
            if fan_in == 0 {
                continue;
            }
            let limit = (6.0 / fan_in as f64).sqrt();
            for w in &mut lp.weights {
                *w = rng.gen_range(-limit..limit);
            }
        }
        set
    }

    pub fn len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_shape(&self, other: &ParamSet) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weights.len() == b.weights.len() && a.bias.len() == b.bias.len())
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    /// Flat coordinate access in layer order, weights before bias.
    pub fn get(&self, index: usize) -> f64 {
        *self.values().nth(index).expect("coordinate in range")
    }

    pub fn set(&mut self, index: usize, value: f64) {
        *self.values_mut().nth(index).expect("coordinate in range") = value;
    }

    /// Layer index owning flat coordinate `index`.
    pub fn layer_of(&self, index: usize) -> usize {
        let mut offset = 0;
        for (i, l) in self.layers.iter().enumerate() {
            offset += l.weights.len() + l.bias.len();
            if index < offset {
                return i;
            }
        }
        panic!("coordinate {index} out of range");
    }

    pub fn add_assign(&mut self, other: &ParamSet) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += *b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in self.values_mut() {
            *a *= s;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: ParamSet,
    pub v: ParamSet,
    pub step: u64,
}

/// Network weights θ together with the optimizer state that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub architecture: Architecture,
    pub tensors: ParamSet,
    pub adam: AdamState,
}

impl NetworkParams {
    pub fn new(architecture: Architecture, tensors: ParamSet) -> Result<Self> {
        architecture.validate()?;
        let expected = ParamSet::zeros(&architecture);
        if !expected.same_shape(&tensors) {
            return Err(Error::Architecture(
                "parameter tensors do not match the architecture".into(),
            ));
        }
        let adam = AdamState {
            m: expected.clone(),
            v: expected,
            step: 0,
        };
        Ok(Self {
            architecture,
            tensors,
            adam,
        })
    }

    pub fn zeros(architecture: Architecture) -> Result<Self> {
        let t = ParamSet::zeros(&architecture);
        Self::new(architecture, t)
    }

    pub fn random_uniform(architecture: Architecture, seed: u64) -> Result<Self> {
        let t = ParamSet::random_uniform(&architecture, seed);
        Self::new(architecture, t)
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        let expected = ParamSet::zeros(&self.architecture);
        if !expected.same_shape(&self.tensors)
            || !expected.same_shape(&self.adam.m)
            || !expected.same_shape(&self.adam.v)
        {
            return Err(Error::Architecture("tensor shapes do not match".into()));
        }
        for (i, l) in self.tensors.layers.iter().enumerate() {
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    layer: i,
                    kind: self.architecture.layers[i].name(),
                });
            }
        }
        Ok(())
    }
}
