use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::layers::{Cache, Layer, LayerSpec};
use super::loss::{log_softmax, softmax_cross_entropy};
use super::train::Model;
use crate::rng::{derive_seed_n, rng_from_seed};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Training mode; the seed fixes every dropout mask of this pass.
    Train { seed: u64 },
}

/// Activations and caches of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `activations[0]` is the input, `activations[k + 1]` the output of layer `k`.
    activations: Vec<Vec<f64>>,
    caches: Vec<Cache>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// A feed-forward stack of layers over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    params: Vec<f64>,
}

impl Network {
    /// Builds the stack and initializes parameters from `seed`.
    pub fn new(input_shape: &[usize], specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let mut net = Self::resolve(input_shape, specs)?;
        let mut rng = rng_from_seed(seed);
        for layer in &net.layers {
            layer.init(&mut rng, &mut net.params[layer.offset..layer.offset + layer.n_params]);
        }
        Ok(net)
    }

    /// Rebuilds a network from stored parameters.
    pub fn from_params(input_shape: &[usize], specs: &[LayerSpec], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::resolve(input_shape, specs)?;
        if params.len() != net.params.len() {
            return Err(Error::Shape {
                layer: "network parameters".into(),
                expected: format!("{}", net.params.len()),
                actual: format!("{}", params.len()),
            });
        }
        net.params = params;
        Ok(net)
    }

    fn resolve(input_shape: &[usize], specs: &[LayerSpec]) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input_shape.to_vec();
        let mut offset = 0;
        for (k, spec) in specs.iter().enumerate() {
            let layer = Layer::resolve(spec, &shape, offset).map_err(|e| match e {
                Error::Shape { layer, expected, actual } => {
                    Error::Shape { layer: format!("layer {k} ({layer})"), expected, actual }
                }
                other => other,
            })?;
            offset += layer.n_params;
            shape = layer.out_shape.clone();
            layers.push(layer);
        }
        Ok(Self { input_shape: input_shape.to_vec(), layers, params: vec![0.0; offset] })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map_or(self.input_len(), Layer::out_len)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec.clone()).collect()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, x: &[f64], mode: Mode) -> Result<Trace> {
        if x.len() != self.input_len() {
            return Err(Error::Shape {
                layer: "network input".into(),
                expected: format!("{:?} ({} values)", self.input_shape, self.input_len()),
                actual: format!("{} values", x.len()),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut caches = Vec::with_capacity(self.layers.len());
        activations.push(x.to_vec());
        for (k, layer) in self.layers.iter().enumerate() {
            let seed = match mode {
                Mode::Train { seed } => Some(derive_seed_n(seed, &[k as u64])),
                Mode::Eval => None,
            };
            let p = &self.params[layer.offset..layer.offset + layer.n_params];
            let input = activations.last().expect("input pushed above");
            let (y, cache) = layer.forward(p, input, seed);
            debug_assert!(y.iter().all(|v| v.is_finite()), "non-finite output from {}", layer.spec.name());
            activations.push(y);
            caches.push(cache);
        }
        Ok(Trace { activations, caches })
    }

    /// Backpropagates `d_out` (gradient of a scalar w.r.t. the network
    /// output) through `trace`; accumulates into `grad` and returns the
    /// gradient w.r.t. the input.
    pub fn backward(&self, trace: &Trace, d_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        assert_eq!(grad.len(), self.params.len());
        assert_eq!(d_out.len(), self.output_len());
        let mut d = d_out.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let range = layer.offset..layer.offset + layer.n_params;
            d = layer.backward(&self.params[range.clone()], &trace.activations[k], &trace.caches[k], &d, &mut grad[range]);
        }
        d
    }

    /// Output of an evaluation-mode pass.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut trace = self.forward(x, Mode::Eval)?;
        Ok(trace.activations.pop().unwrap_or_default())
    }
}

impl Model for Network {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn log_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(log_softmax(&self.logits(x)?))
    }

    fn accumulate_gradient(&self, x: &[f64], label: usize, seed: u64, grad: &mut [f64]) -> Result<(f64, usize)> {
        let trace = self.forward(x, Mode::Train { seed })?;
        let logits = trace.output();
        let (loss, d_logits) = softmax_cross_entropy(logits, label)?;
        let pred = argmax(logits);
        self.backward(&trace, &d_logits, grad);
        Ok((loss, pred))
    }
}

/// Index of the largest entry; the first one on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests;
