//! Raster type shared by the whole pipeline.
//!
//! An [`ImageTensor`] is a real-valued H×W×C raster carrying a declared
//! value domain: `FileU8` for decoded files ([0, 255]) and `ModelSigned`
//! for network inputs/outputs ([-1, 1]). Conversions between the two are
//! affine and lossless up to 1/255 per element on a round trip.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Interval the raster values are declared to live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueDomain {
    /// Decoded file values, [0, 255].
    FileU8,
    /// Network-side values, [-1, 1].
    ModelSigned,
}

impl ValueDomain {
    pub fn interval(self) -> (f64, f64) {
        match self {
            ValueDomain::FileU8 => (0.0, 255.0),
            ValueDomain::ModelSigned => (-1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImageError {
    EmptyImage,
    BadChannelCount {
        got: usize,
    },
    NonFiniteValue {
        index: usize,
    },
    OutOfDomain {
        index: usize,
        value: f64,
    },
    WrongDomain {
        expected: ValueDomain,
        got: ValueDomain,
    },
    DimensionMismatch {
        a: (usize, usize),
        b: (usize, usize),
    },
    DataLength {
        expected: usize,
        got: usize,
    },
    CropTooSmall,
}

impl fmt::Display for ImageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImageError::EmptyImage => write!(f, "image has zero height or width"),
            ImageError::BadChannelCount { got } => {
                write!(f, "channel count must be 1 or 3, got {got}")
            }
            ImageError::NonFiniteValue { index } => {
                write!(f, "non-finite value at element {index}")
            }
            ImageError::OutOfDomain { index, value } => {
                write!(
                    f,
                    "value {value} at element {index} outside declared domain"
                )
            }
            ImageError::WrongDomain { expected, got } => {
                write!(f, "expected {expected:?} domain, got {got:?}")
            }
            ImageError::DimensionMismatch { a, b } => {
                write!(f, "spatial dims differ: {}x{} vs {}x{}", a.0, a.1, b.0, b.1)
            }
            ImageError::DataLength { expected, got } => {
                write!(f, "data length {got} does not match H*W*C = {expected}")
            }
            ImageError::CropTooSmall => write!(f, "crop region smaller than 1x1 px"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ImageError {}

/// H×W×C raster in row-major HWC order with a declared value domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    domain: ValueDomain,
    data: Vec<f64>,
}

impl ImageTensor {
    /// Validates every invariant: dims >= 1, channels in {1, 3}, all values
    /// finite and inside the declared domain interval.
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        domain: ValueDomain,
        data: Vec<f64>,
    ) -> Result<Self, ImageError> {
        if height == 0 || width == 0 {
            return Err(ImageError::EmptyImage);
        }
        if channels != 1 && channels != 3 {
            return Err(ImageError::BadChannelCount { got: channels });
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(ImageError::DataLength {
                expected,
                got: data.len(),
            });
        }
        let (lo, hi) = domain.interval();
        for (i, &v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(ImageError::NonFiniteValue { index: i });
            }
            if v < lo || v > hi {
                return Err(ImageError::OutOfDomain { index: i, value: v });
            }
        }
        Ok(Self {
            height,
            width,
            channels,
            domain,
            data,
        })
    }

    /// Constant-valued image.
    pub fn filled(
        height: usize,
        width: usize,
        channels: usize,
        domain: ValueDomain,
        value: f64,
    ) -> Result<Self, ImageError> {
        Self::new(
            height,
            width,
            channels,
            domain,
            vec![value; height * width * channels],
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn domain(&self) -> ValueDomain {
        self.domain
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Affine map [0, 255] -> [-1, 1].
    pub fn to_model_domain(&self) -> Result<ImageTensor, ImageError> {
        if self.domain != ValueDomain::FileU8 {
            return Err(ImageError::WrongDomain {
                expected: ValueDomain::FileU8,
                got: self.domain,
            });
        }
        let data = self.data.iter().map(|&v| v / 127.5 - 1.0).collect();
        Ok(ImageTensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            domain: ValueDomain::ModelSigned,
            data,
        })
    }

    /// Affine map [-1, 1] -> [0, 255].
    pub fn from_model_domain(&self) -> Result<ImageTensor, ImageError> {
        if self.domain != ValueDomain::ModelSigned {
            return Err(ImageError::WrongDomain {
                expected: ValueDomain::ModelSigned,
                got: self.domain,
            });
        }
        let data = self.data.iter().map(|&v| (v + 1.0) * 127.5).collect();
        Ok(ImageTensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            domain: ValueDomain::FileU8,
            data,
        })
    }

    /// Replicates a single-channel image to 3 identical channels.
    /// 3-channel inputs pass through unchanged.
    pub fn replicate_to_3(&self) -> ImageTensor {
        if self.channels == 3 {
            return self.clone();
        }
        let mut data = Vec::with_capacity(self.height * self.width * 3);
        for &v in &self.data {
            data.extend_from_slice(&[v, v, v]);
        }
        ImageTensor {
            height: self.height,
            width: self.width,
            channels: 3,
            domain: self.domain,
            data,
        }
    }

    /// Extracts channel `c` as a single-channel image.
    pub fn channel(&self, c: usize) -> ImageTensor {
        assert!(c < self.channels);
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|px| px[c])
            .collect();
        ImageTensor {
            height: self.height,
            width: self.width,
            channels: 1,
            domain: self.domain,
            data,
        }
    }

    /// BT.601 luma of a 3-channel image; identity on single-channel input.
    pub fn to_luma(&self) -> ImageTensor {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|px| 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2])
            .collect();
        ImageTensor {
            height: self.height,
            width: self.width,
            channels: 1,
            domain: self.domain,
            data,
        }
    }

    /// Bilinear resample to `new_h` x `new_w`. Same-size calls are a copy,
    /// so resize never perturbs values when it has nothing to do.
    pub fn resize_bilinear(&self, new_h: usize, new_w: usize) -> Result<ImageTensor, ImageError> {
        if new_h == 0 || new_w == 0 {
            return Err(ImageError::EmptyImage);
        }
        if new_h == self.height && new_w == self.width {
            return Ok(self.clone());
        }
        let c = self.channels;
        let mut data = vec![0.0; new_h * new_w * c];
        let sy = self.height as f64 / new_h as f64;
        let sx = self.width as f64 / new_w as f64;
        for oy in 0..new_h {
            // pixel-center alignment
            let fy = ((oy as f64 + 0.5) * sy - 0.5).max(0.0);
            let y0 = (fy as usize).min(self.height - 1);
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f64;
            for ox in 0..new_w {
                let fx = ((ox as f64 + 0.5) * sx - 0.5).max(0.0);
                let x0 = (fx as usize).min(self.width - 1);
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f64;
                for ch in 0..c {
                    let v00 = self.get(y0, x0, ch);
                    let v01 = self.get(y0, x1, ch);
                    let v10 = self.get(y1, x0, ch);
                    let v11 = self.get(y1, x1, ch);
                    let top = v00 + (v01 - v00) * wx;
                    let bot = v10 + (v11 - v10) * wx;
                    data[(oy * new_w + ox) * c + ch] = top + (bot - top) * wy;
                }
            }
        }
        Ok(ImageTensor {
            height: new_h,
            width: new_w,
            channels: c,
            domain: self.domain,
            data,
        })
    }

    /// Crops the rectangle at (y0, x0) of size h x w.
    pub fn crop(
        &self,
        y0: usize,
        x0: usize,
        h: usize,
        w: usize,
    ) -> Result<ImageTensor, ImageError> {
        if h == 0 || w == 0 {
            return Err(ImageError::CropTooSmall);
        }
        assert!(y0 + h <= self.height && x0 + w <= self.width);
        let c = self.channels;
        let mut data = Vec::with_capacity(h * w * c);
        for y in y0..y0 + h {
            let row = &self.data[(y * self.width + x0) * c..(y * self.width + x0 + w) * c];
            data.extend_from_slice(row);
        }
        ImageTensor::new(h, w, c, self.domain, data)
    }

    /// Mirrors the image left-right.
    pub fn flip_horizontal(&self) -> ImageTensor {
        let c = self.channels;
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            for x in (0..self.width).rev() {
                let base = (y * self.width + x) * c;
                data.extend_from_slice(&self.data[base..base + c]);
            }
        }
        ImageTensor {
            height: self.height,
            width: self.width,
            channels: c,
            domain: self.domain,
            data,
        }
    }

    /// Rotates by `quarter_turns` * 90 degrees clockwise.
    pub fn rotate90(&self, quarter_turns: u8) -> ImageTensor {
        let turns = quarter_turns % 4;
        if turns == 0 {
            return self.clone();
        }
        let c = self.channels;
        let (h, w) = (self.height, self.width);
        let (nh, nw) = if turns.is_multiple_of(2) {
            (h, w)
        } else {
            (w, h)
        };
        let mut data = vec![0.0; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                let (ny, nx) = match turns {
                    1 => (x, h - 1 - y),
                    2 => (h - 1 - y, w - 1 - x),
                    _ => (w - 1 - x, y),
                };
                let src = (y * w + x) * c;
                let dst = (ny * nw + nx) * c;
                data[dst..dst + c].copy_from_slice(&self.data[src..src + c]);
            }
        }
        ImageTensor {
            height: nh,
            width: nw,
            channels: c,
            domain: self.domain,
            data,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize, c: usize, domain: ValueDomain) -> ImageTensor {
        let (lo, hi) = domain.interval();
        let n = h * w * c;
        let data = (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect();
        ImageTensor::new(h, w, c, domain, data).unwrap()
    }

    #[test]
    fn domain_endpoints_and_midpoint() {
        let img = ImageTensor::new(1, 3, 1, ValueDomain::FileU8, vec![0.0, 127.5, 255.0]).unwrap();
        let m = img.to_model_domain().unwrap();
        assert_eq!(m.data(), &[-1.0, 0.0, 1.0]);
        assert_eq!(m.domain(), ValueDomain::ModelSigned);
    }

    #[test]
    fn round_trip_error_bounded() {
        let img = ramp(4, 4, 3, ValueDomain::FileU8);
        let back = img.to_model_domain().unwrap().from_model_domain().unwrap();
        let max_err = img
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err <= 1.0 / 255.0, "round trip error {max_err}");
    }

    #[test]
    fn all_zeros_maps_to_minus_one() {
        let img = ImageTensor::filled(2, 2, 1, ValueDomain::FileU8, 0.0).unwrap();
        let m = img.to_model_domain().unwrap();
        assert!(m.data().iter().all(|&v| v == -1.0));
    }

    #[test]
    fn wrong_source_domain_rejected() {
        let img = ImageTensor::filled(2, 2, 1, ValueDomain::ModelSigned, 0.0).unwrap();
        assert!(matches!(
            img.to_model_domain(),
            Err(ImageError::WrongDomain { .. })
        ));
        let img = ImageTensor::filled(2, 2, 1, ValueDomain::FileU8, 0.0).unwrap();
        assert!(matches!(
            img.from_model_domain(),
            Err(ImageError::WrongDomain { .. })
        ));
    }

    #[test]
    fn invariants_rejected() {
        assert!(matches!(
            ImageTensor::new(0, 2, 1, ValueDomain::FileU8, vec![]),
            Err(ImageError::EmptyImage)
        ));
        assert!(matches!(
            ImageTensor::new(1, 1, 2, ValueDomain::FileU8, vec![0.0, 0.0]),
            Err(ImageError::BadChannelCount { got: 2 })
        ));
        assert!(matches!(
            ImageTensor::new(1, 1, 1, ValueDomain::FileU8, vec![f64::NAN]),
            Err(ImageError::NonFiniteValue { .. })
        ));
        assert!(matches!(
            ImageTensor::new(1, 1, 1, ValueDomain::ModelSigned, vec![1.5]),
            Err(ImageError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn flip_is_involution() {
        let img = ramp(3, 5, 3, ValueDomain::FileU8);
        assert_eq!(img.flip_horizontal().flip_horizontal(), img);
    }

    #[test]
    fn rotate_four_times_is_identity() {
        let img = ramp(3, 5, 1, ValueDomain::FileU8);
        let r = img.rotate90(1);
        assert_eq!(r.height(), 5);
        assert_eq!(r.width(), 3);
        assert_eq!(r.rotate90(3), img);
    }

    #[test]
    fn same_size_resize_is_exact_copy() {
        let img = ramp(4, 7, 3, ValueDomain::ModelSigned);
        assert_eq!(img.resize_bilinear(4, 7).unwrap(), img);
    }

    #[test]
    fn resize_preserves_constant_images() {
        let img = ImageTensor::filled(5, 5, 1, ValueDomain::FileU8, 42.0).unwrap();
        let r = img.resize_bilinear(9, 3).unwrap();
        assert!(r.data().iter().all(|&v| (v - 42.0).abs() < 1e-12));
    }

    #[test]
    fn replicate_and_channel_roundtrip() {
        let img = ramp(2, 3, 1, ValueDomain::FileU8);
        let rep = img.replicate_to_3();
        assert_eq!(rep.channels(), 3);
        for c in 0..3 {
            assert_eq!(rep.channel(c).data(), img.data());
        }
    }

    #[test]
    fn pair_requires_matching_dims() {
        let vis = ramp(4, 4, 3, ValueDomain::FileU8);
        let ir = ramp(4, 5, 1, ValueDomain::FileU8);
        assert!(crate::ImagePair::new(vis, ir, "a".into()).is_err());
    }
}
