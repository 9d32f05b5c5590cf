//! Hand-rolled layers with explicit forward/backward passes.
//!
//! Layout conventions: activations are NHWC ([`Tensor4`]), convolution
//! weights are (ky, kx, cin, cout). Every layer caches what its backward
//! pass needs during a `Mode::Train` forward; `Mode::Eval` forwards leave
//! all state untouched so evaluation is reentrant and deterministic.

mod activ;
mod conv;
mod norm;
mod tensor;

pub use activ::Activation;
pub use conv::{random_tensor, seeded_rng, Conv2d, ConvTranspose2d};
pub use norm::{estimate_spectral_norm, BatchNorm2d, SpectralNorm};
pub use tensor::Tensor4;

use alloc::string::String;
use alloc::vec::Vec;

/// Callback over trainable parameters as (name, value, grad) triples.
pub type ParamVisitor<'a> = dyn FnMut(String, &mut Vec<f64>, &Vec<f64>) + 'a;

/// Callback over persistent state as (name, shape, value) triples.
pub type StateVisitor<'a> = dyn FnMut(String, &[usize], &mut Vec<f64>) + 'a;

/// Forward-pass mode. `Train` caches activations and advances stateful
/// pieces (batch-norm running stats, spectral-norm power iteration);
/// `Eval` is read-only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// One named state array (parameter, running statistic or power-iteration
/// vector) of a network, as exported for checkpointing.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// conv -> optional batch norm -> optional activation.
#[derive(Debug, Clone)]
pub struct Block {
    pub conv: ConvLayer,
    pub norm: Option<BatchNorm2d>,
    pub act: Option<Activation>,
}

#[derive(Debug, Clone)]
pub enum ConvLayer {
    Standard(Conv2d),
    Transpose(ConvTranspose2d),
}

impl Block {
    pub fn forward(&mut self, x: &Tensor4, mode: Mode) -> Tensor4 {
        let mut y = match &mut self.conv {
            ConvLayer::Standard(c) => c.forward(x, mode),
            ConvLayer::Transpose(c) => c.forward(x, mode),
        };
        if let Some(bn) = &mut self.norm {
            y = bn.forward(&y, mode);
        }
        if let Some(act) = &mut self.act {
            y = act.forward(&y, mode);
        }
        y
    }

    /// Consumes the caches of the preceding `Mode::Train` forward.
    pub fn backward(&mut self, grad_out: &Tensor4) -> Tensor4 {
        let mut g = grad_out.clone();
        if let Some(act) = &mut self.act {
            g = act.backward(&g);
        }
        if let Some(bn) = &mut self.norm {
            g = bn.backward(&g);
        }
        match &mut self.conv {
            ConvLayer::Standard(c) => c.backward(&g),
            ConvLayer::Transpose(c) => c.backward(&g),
        }
    }

    pub fn zero_grad(&mut self) {
        match &mut self.conv {
            ConvLayer::Standard(c) => c.zero_grad(),
            ConvLayer::Transpose(c) => c.zero_grad(),
        }
        if let Some(bn) = &mut self.norm {
            bn.zero_grad();
        }
    }

    /// Visits trainable parameters as (name, value, grad) triples, in a
    /// fixed order.
    pub fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_>) {
        match &mut self.conv {
            ConvLayer::Standard(c) => c.visit_params(prefix, f),
            ConvLayer::Transpose(c) => c.visit_params(prefix, f),
        }
        if let Some(bn) = &mut self.norm {
            bn.visit_params(prefix, f);
        }
    }

    /// Visits all persistent state (parameters plus running statistics and
    /// spectral-norm vectors) for checkpointing.
    pub fn visit_state(&mut self, prefix: &str, f: &mut StateVisitor<'_>) {
        match &mut self.conv {
            ConvLayer::Standard(c) => c.visit_state(prefix, f),
            ConvLayer::Transpose(c) => c.visit_state(prefix, f),
        }
        if let Some(bn) = &mut self.norm {
            bn.visit_state(prefix, f);
        }
    }
}
