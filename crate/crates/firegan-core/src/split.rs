//! Seeded train/validation partitioning of a paired corpus.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::nn::seeded_rng;
use crate::ImagePair;

/// Partition plan. `train_count == 0` means "everything not in the
/// validation set". `augmentation_factor` sizes the default augmentation
/// target for the train pool; explicit targets can override it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_count: usize,
    pub val_count: usize,
    pub augmentation_factor: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_count: 0,
            val_count: 96,
            augmentation_factor: 16,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self, corpus_size: usize) -> Result<(), SplitError> {
        if self.augmentation_factor < 1 {
            return Err(SplitError::BadSpec(
                "augmentation_factor must be at least 1",
            ));
        }
        if self.train_count + self.val_count > corpus_size {
            return Err(SplitError::InsufficientCorpus {
                need: self.train_count + self.val_count,
                have: corpus_size,
            });
        }
        Ok(())
    }

    /// Default augmented size of a train pool under this spec.
    pub fn augmented_target(&self, train_pool: usize) -> usize {
        train_pool * self.augmentation_factor
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitError {
    BadSpec(&'static str),
    InsufficientCorpus { need: usize, have: usize },
}

impl core::fmt::Display for SplitError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SplitError::BadSpec(msg) => write!(f, "invalid split spec: {msg}"),
            SplitError::InsufficientCorpus { need, have } => {
                write!(f, "split needs {need} pairs but the corpus has {have}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SplitError {}

/// Shuffles the corpus with the spec's seed, takes the validation set
/// first, then the train pool. The two are disjoint by construction;
/// validation pairs pass through un-augmented.
pub fn split(
    corpus: &[ImagePair],
    spec: &SplitSpec,
) -> Result<(Vec<ImagePair>, Vec<ImagePair>), SplitError> {
    spec.validate(corpus.len())?;
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut rng = seeded_rng(spec.seed);
    order.shuffle(&mut rng);
    let val: Vec<ImagePair> = order[..spec.val_count]
        .iter()
        .map(|&i| corpus[i].clone())
        .collect();
    let train_end = if spec.train_count == 0 {
        corpus.len()
    } else {
        spec.val_count + spec.train_count
    };
    let train: Vec<ImagePair> = order[spec.val_count..train_end]
        .iter()
        .map(|&i| corpus[i].clone())
        .collect();
    Ok((train, val))
}
