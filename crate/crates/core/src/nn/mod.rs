//! A small dependency-light neural network core in f64.
//!
//! Everything here exists to make PMI regression runs reproducible down to
//! the bit: plain `ndarray` tensors, explicit forward/backward passes, and
//! seeded initialization, with no threading inside an operation. The cost
//! is speed, which desk-scale experiments can afford; the payoff is that
//! re-running a training loop with the same seed replays the exact same
//! arithmetic.
//!
//! Layers operate on NCHW activations (`Array4<f64>`). A forward pass with
//! `train = true` caches whatever the matching backward pass needs;
//! `train = false` skips the caches and, for batch normalization, switches
//! to running statistics.

pub mod adam;
pub mod backbones;
pub mod blocks;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod vit;

use ndarray::{Array4, ArrayD};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A trainable array: the value plus a lazily allocated gradient
/// accumulator. Backbones that are only ever run forward never pay for
/// gradient storage.
#[derive(Debug, Clone)]
pub struct Tensor {
    pub value: ArrayD<f64>,
    grad: Option<ArrayD<f64>>,
}

impl Tensor {
    pub fn new(value: ArrayD<f64>) -> Self {
        Tensor { value, grad: None }
    }

    /// Gradient buffer, allocated as zeros on first touch.
    pub fn grad_mut(&mut self) -> &mut ArrayD<f64> {
        if self.grad.is_none() {
            self.grad = Some(ArrayD::zeros(self.value.raw_dim()));
        }
        self.grad.as_mut().expect("just allocated")
    }

    pub fn grad(&self) -> Option<&ArrayD<f64>> {
        self.grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.fill(0.0);
        }
    }
}

/// Uniform init with He-style fan-in scaling, the convention for layers
/// feeding ReLUs.
pub fn he_uniform(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> ArrayD<f64> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    ArrayD::from_shape_simple_fn(shape.to_vec(), || rng.random_range(-bound..=bound))
}

/// Uniform init with Xavier/Glorot scaling, for layers without a ReLU
/// immediately after (attention projections, fusion output).
pub fn xavier_uniform(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> ArrayD<f64> {
    let bound = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    ArrayD::from_shape_simple_fn(shape.to_vec(), || rng.random_range(-bound..=bound))
}

/// One stage of a convolutional feature extractor. `forward` with
/// `train = true` must precede `backward`; parameter visitation order is
/// fixed by construction, which checkpointing and the optimizer both rely
/// on.
pub trait Layer {
    fn forward(&mut self, x: Array4<f64>, train: bool) -> Array4<f64>;
    fn backward(&mut self, grad: Array4<f64>) -> Array4<f64>;
    /// Trainable parameters, in a stable order.
    fn visit_params(&mut self, _f: &mut dyn FnMut(&mut Tensor)) {}
    /// Non-trainable state the checkpoint must carry (running statistics).
    fn visit_buffers(&mut self, _f: &mut dyn FnMut(&mut ArrayD<f64>)) {}
}

/// Layers applied one after another.
pub struct Sequential {
    pub layers: Vec<Box<dyn Layer>>,
}

impl Sequential {
    pub fn new(layers: Vec<Box<dyn Layer>>) -> Self {
        Sequential { layers }
    }
}

impl Layer for Sequential {
    fn forward(&mut self, x: Array4<f64>, train: bool) -> Array4<f64> {
        self.layers
            .iter_mut()
            .fold(x, |acc, layer| layer.forward(acc, train))
    }

    fn backward(&mut self, grad: Array4<f64>) -> Array4<f64> {
        self.layers
            .iter_mut()
            .rev()
            .fold(grad, |acc, layer| layer.backward(acc))
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        for layer in &mut self.layers {
            layer.visit_params(f);
        }
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut ArrayD<f64>)) {
        for layer in &mut self.layers {
            layer.visit_buffers(f);
        }
    }
}

/// Maps image batches to embedding rows. Implemented by the convolutional
/// stacks and the transformer; the regression heads sit on top.
pub trait FeatureExtractor {
    fn embedding_dim(&self) -> usize;
    fn in_channels(&self) -> usize;
    fn input_side(&self) -> usize;
    /// (batch, channels, side, side) -> (batch, embedding_dim).
    fn forward(&mut self, x: &Array4<f64>, train: bool) -> ndarray::Array2<f64>;
    fn backward(&mut self, grad: &ndarray::Array2<f64>);
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor));
    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut ArrayD<f64>));
}
