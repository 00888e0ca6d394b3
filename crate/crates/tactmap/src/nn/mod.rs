//! A small CPU tensor backend with hand-written forward/backward passes.
//!
//! Everything is generic over the scalar so that training runs in f32 while
//! gradient checks run in f64 against central finite differences. Backward
//! passes accumulate into each parameter's `grad` buffer; the caller zeroes
//! gradients between steps. There is no graph or tape: layers take whatever
//! forward state they need (inputs or caches) explicitly.

mod adam;
mod conv;
mod layers;
mod loss;

pub use adam::Adam;
pub use conv::{conv2d, conv2d_grads, conv_output_size, Conv2d, ConvTranspose2d};
pub use layers::{
    concat_channels, leaky_relu, leaky_relu_backward, maxpool2, maxpool2_backward,
    split_channels, tanh_backward, tanh_forward, InstanceNorm2d, NormCache,
};
pub use loss::{bce_with_logits, l1_loss};

use ndarray::{ArrayD, NdFloat};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Scalar type for tensors: f32 in training, f64 in gradient checks.
pub trait Real: NdFloat {
    /// Lossy conversion from an f64 constant.
    fn of(v: f64) -> Self {
        num_traits::cast(v).expect("finite conversion")
    }
    fn to_f64_lossy(self) -> f64 {
        num_traits::cast(self).expect("float widens to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// A trainable tensor and its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param<F> {
    pub value: ArrayD<F>,
    pub grad: ArrayD<F>,
}

impl<F: Real> Param<F> {
    pub fn new(value: ArrayD<F>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Param { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(F::zero());
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Gaussian init with the DCGAN-family std of 0.02.
pub fn randn_init<F: Real>(shape: &[usize], std: f64, rng: &mut ChaCha8Rng) -> ArrayD<F> {
    ArrayD::from_shape_simple_fn(shape.to_vec(), || {
        let z: f64 = rng.sample(StandardNormal);
        F::of(z * std)
    })
}
