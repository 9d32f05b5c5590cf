//! Core of a two-generator adversarial visible/infrared fusion model.
//!
//! Everything in this crate is pure computation over owned buffers: image
//! tensors, the four networks (two generators, two discriminators), their
//! losses and gradients, the paired-image augmentation and split logic, and
//! the fusion-quality metric suite (entropy, correlation, PSNR, SSIM).
//! File formats, image codecs and the CLI live in the companion `firegan`
//! crate; this one is `no_std` + `alloc` so the numerics stay portable.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod augment;
pub mod image;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod split;
pub mod train;

pub use image::{ImageTensor, ValueDomain};
pub use losses::{LossReport, LossWeights};
pub use metrics::{MetricParams, MetricRecord};
pub use model::{Network, NetworkKind, NetworkSpec};
pub use train::{TrainState, TrainingConfig};

/// Paired visible/infrared images of one scene, pixel-registered.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub visible: ImageTensor,
    pub infrared: ImageTensor,
    pub id: alloc::string::String,
}

impl ImagePair {
    /// Builds a pair, enforcing registration: both members must share
    /// spatial dimensions. The visible member must have 3 channels.
    pub fn new(
        visible: ImageTensor,
        infrared: ImageTensor,
        id: alloc::string::String,
    ) -> Result<Self, image::ImageError> {
        if visible.channels() != 3 {
            return Err(image::ImageError::BadChannelCount {
                got: visible.channels(),
            });
        }
        if visible.height() != infrared.height() || visible.width() != infrared.width() {
            return Err(image::ImageError::DimensionMismatch {
                a: (visible.height(), visible.width()),
                b: (infrared.height(), infrared.width()),
            });
        }
        Ok(Self {
            visible,
            infrared,
            id,
        })
    }
}
