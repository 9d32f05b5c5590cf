//! Paired geometric augmentation. Every operation applies the identical
//! transform to both members of a pair, so registration survives.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::image::{ImageError, ImageTensor};
use crate::nn::seeded_rng;
use crate::ImagePair;

/// One geometric transform. A list of these is an augmentation plan for a
/// single pair; each op yields one output pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op")]
pub enum AugmentOp {
    /// Passes the pair through untouched.
    Identity,
    HorizontalFlip,
    Rotate90 {
        quarter_turns: u8,
    },
    /// Random crop covering `fraction` of each side, resized back to the
    /// original size. The crop origin is drawn from the op's seed, so the
    /// same op at a different plan position crops differently.
    Crop {
        fraction: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum AugmentError {
    /// Crop fractions must lie in (0, 1].
    BadFraction(f64),
    /// The fraction rounds below one pixel on this image.
    CropTooSmall,
    Image(ImageError),
}

impl core::fmt::Display for AugmentError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            AugmentError::BadFraction(v) => write!(f, "crop fraction {v} outside (0, 1]"),
            AugmentError::CropTooSmall => write!(f, "crop region smaller than 1x1 px"),
            AugmentError::Image(e) => write!(f, "augmentation failed: {e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for AugmentError {}

impl From<ImageError> for AugmentError {
    fn from(e: ImageError) -> Self {
        AugmentError::Image(e)
    }
}

fn apply_op(
    img: &ImageTensor,
    op: AugmentOp,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<ImageTensor, AugmentError> {
    match op {
        AugmentOp::Identity => Ok(img.clone()),
        AugmentOp::HorizontalFlip => Ok(img.flip_horizontal()),
        AugmentOp::Rotate90 { quarter_turns } => Ok(img.rotate90(quarter_turns)),
        AugmentOp::Crop { fraction } => {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(AugmentError::BadFraction(fraction));
            }
            let ch = (img.height() as f64 * fraction) as usize;
            let cw = (img.width() as f64 * fraction) as usize;
            if ch < 1 || cw < 1 {
                return Err(AugmentError::CropTooSmall);
            }
            let y0 = rng.random_range(0..=img.height() - ch);
            let x0 = rng.random_range(0..=img.width() - cw);
            let cropped = img.crop(y0, x0, ch, cw)?;
            Ok(cropped.resize_bilinear(img.height(), img.width())?)
        }
    }
}

/// Applies each op in the plan to both members of the pair, one output
/// pair per op, deterministically for a fixed seed. The identity op
/// reproduces the input pair verbatim; other ops suffix the id with the
/// plan position.
pub fn augment(
    pair: &ImagePair,
    ops: &[AugmentOp],
    seed: u64,
) -> Result<Vec<ImagePair>, AugmentError> {
    let mut out = Vec::with_capacity(ops.len());
    for (i, &op) in ops.iter().enumerate() {
        // two independent draws per op would desynchronize the members;
        // one rng is built per op and reset between the two applications
        let mut rng_v = seeded_rng(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut rng_r = rng_v.clone();
        let visible = apply_op(&pair.visible, op, &mut rng_v)?;
        let infrared = apply_op(&pair.infrared, op, &mut rng_r)?;
        let id = if op == AugmentOp::Identity {
            pair.id.clone()
        } else {
            format!("{}#a{i}", pair.id)
        };
        out.push(ImagePair {
            visible,
            infrared,
            id,
        });
    }
    Ok(out)
}

/// Cycle of non-identity ops used to pad plans past the identity slot.
const PLAN_CYCLE: [AugmentOp; 8] = [
    AugmentOp::HorizontalFlip,
    AugmentOp::Rotate90 { quarter_turns: 1 },
    AugmentOp::Rotate90 { quarter_turns: 2 },
    AugmentOp::Rotate90 { quarter_turns: 3 },
    AugmentOp::Crop { fraction: 0.9 },
    AugmentOp::Crop { fraction: 0.8 },
    AugmentOp::Crop { fraction: 0.7 },
    AugmentOp::Crop { fraction: 0.6 },
];

/// Builds one op list per pool item so the total output count hits
/// `target` exactly: every item gets `target / pool` ops starting with the
/// identity, and the first `target % pool` items get one extra. The cycle
/// is rotated per item, and crop ops recurring at different positions draw
/// different origins, so plans deeper than the cycle stay diverse.
pub fn plan_augmentation(pool: usize, target: usize) -> Vec<Vec<AugmentOp>> {
    assert!(pool > 0, "empty training pool");
    assert!(target >= pool, "target below one output per item");
    let base = target / pool;
    let extra = target % pool;
    (0..pool)
        .map(|i| {
            let count = base + usize::from(i < extra);
            let mut plan = Vec::with_capacity(count);
            plan.push(AugmentOp::Identity);
            for k in 0..count - 1 {
                plan.push(PLAN_CYCLE[(k + i) % PLAN_CYCLE.len()]);
            }
            plan
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ValueDomain;
    use alloc::vec;

    fn checker_pair(h: usize, w: usize) -> ImagePair {
        let data: Vec<f64> = (0..h * w * 3)
            .map(|i| ((i / 3 + (i / 3) / w) % 2) as f64 * 255.0)
            .collect();
        let visible = ImageTensor::new(h, w, 3, ValueDomain::FileU8, data.clone()).unwrap();
        let infrared = ImageTensor::new(h, w, 3, ValueDomain::FileU8, data).unwrap();
        ImagePair::new(visible, infrared, "chk".into()).unwrap()
    }

    #[test]
    fn identity_plan_reproduces_the_pair() {
        let pair = checker_pair(4, 4);
        let out = augment(&pair, &[AugmentOp::Identity], 1).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0], pair);
    }

    #[test]
    fn flip_twice_restores_values() {
        let pair = checker_pair(4, 6);
        let once = augment(&pair, &[AugmentOp::HorizontalFlip], 1).unwrap();
        let twice = augment(&once[0], &[AugmentOp::HorizontalFlip], 1).unwrap();
        assert_eq!(twice[0].visible.data(), pair.visible.data());
        assert_eq!(twice[0].infrared.data(), pair.infrared.data());
    }

    #[test]
    fn both_members_receive_the_same_transform() {
        // members start identical, so they must stay identical under any op
        let pair = checker_pair(8, 8);
        let ops = vec![
            AugmentOp::HorizontalFlip,
            AugmentOp::Rotate90 { quarter_turns: 1 },
            AugmentOp::Crop { fraction: 0.5 },
            AugmentOp::Crop { fraction: 0.5 },
        ];
        for p in augment(&pair, &ops, 7).unwrap() {
            assert_eq!(p.visible.data(), p.infrared.data());
            assert_eq!(p.visible.height(), 8);
            assert_eq!(p.visible.width(), 8);
        }
    }

    fn ramp_pair(h: usize, w: usize) -> ImagePair {
        // aperiodic raster: crops from different origins never coincide
        let data: Vec<f64> = (0..h * w * 3).map(|i| (i / 3) as f64).collect();
        let visible = ImageTensor::new(h, w, 3, ValueDomain::FileU8, data.clone()).unwrap();
        let infrared = ImageTensor::new(h, w, 3, ValueDomain::FileU8, data).unwrap();
        ImagePair::new(visible, infrared, "ramp".into()).unwrap()
    }

    #[test]
    fn augmentation_is_deterministic_per_seed() {
        let pair = ramp_pair(8, 8);
        let ops = vec![
            AugmentOp::Crop { fraction: 0.6 },
            AugmentOp::Crop { fraction: 0.6 },
        ];
        let a = augment(&pair, &ops, 42).unwrap();
        let b = augment(&pair, &ops, 42).unwrap();
        assert_eq!(a, b);
        // distinct plan positions draw distinct crops
        assert_ne!(a[0].visible.data(), a[1].visible.data());
    }

    #[test]
    fn crop_errors_are_reported() {
        let pair = checker_pair(4, 4);
        assert!(matches!(
            augment(&pair, &[AugmentOp::Crop { fraction: 1.5 }], 1),
            Err(AugmentError::BadFraction(_))
        ));
        assert!(matches!(
            augment(&pair, &[AugmentOp::Crop { fraction: 0.1 }], 1),
            Err(AugmentError::CropTooSmall)
        ));
    }

    #[test]
    fn plans_hit_published_training_counts() {
        for (pool, target) in [(381, 6112), (512, 8192)] {
            let plans = plan_augmentation(pool, target);
            assert_eq!(plans.len(), pool);
            let total: usize = plans.iter().map(|p| p.len()).sum();
            assert_eq!(total, target);
            assert!(plans.iter().all(|p| p[0] == AugmentOp::Identity));
        }
    }

    #[test]
    fn planned_augmentation_expands_a_pool() {
        let pairs: Vec<ImagePair> = (0..3).map(|_| checker_pair(8, 8)).collect();
        let plans = plan_augmentation(3, 7);
        let mut total = 0;
        for (i, (pair, plan)) in pairs.iter().zip(&plans).enumerate() {
            total += augment(pair, plan, 11 ^ i as u64).unwrap().len();
        }
        assert_eq!(total, 7);
    }
}
