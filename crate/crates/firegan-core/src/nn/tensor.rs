use alloc::vec;
use alloc::vec::Vec;

use crate::image::{ImageError, ImageTensor, ValueDomain};

/// Batched feature map, NHWC row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize, h: usize, w: usize, c: usize) -> Self {
        Self {
            n,
            h,
            w,
            c,
            data: vec![0.0; n * h * w * c],
        }
    }

    pub fn from_data(n: usize, h: usize, w: usize, c: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * h * w * c, "tensor data length mismatch");
        Self { n, h, w, c, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, n: usize, y: usize, x: usize, c: usize) -> f64 {
        self.data[((n * self.h + y) * self.w + x) * self.c + c]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, y: usize, x: usize, c: usize) -> &mut f64 {
        &mut self.data[((n * self.h + y) * self.w + x) * self.c + c]
    }

    pub fn same_shape(&self, other: &Tensor4) -> bool {
        self.n == other.n && self.h == other.h && self.w == other.w && self.c == other.c
    }

    /// Stacks same-shaped images into a batch.
    pub fn stack(images: &[&ImageTensor]) -> Result<Self, ImageError> {
        let first = images.first().ok_or(ImageError::EmptyImage)?;
        let (h, w, c) = (first.height(), first.width(), first.channels());
        let mut data = Vec::with_capacity(images.len() * h * w * c);
        for img in images {
            if img.height() != h || img.width() != w {
                return Err(ImageError::DimensionMismatch {
                    a: (h, w),
                    b: (img.height(), img.width()),
                });
            }
            if img.channels() != c {
                return Err(ImageError::BadChannelCount {
                    got: img.channels(),
                });
            }
            data.extend_from_slice(img.data());
        }
        Ok(Self {
            n: images.len(),
            h,
            w,
            c,
            data,
        })
    }

    /// Extracts batch item `i` as an image in the given domain, clamping
    /// values to the domain interval (generator heads already bound their
    /// outputs, this only shaves float dust at the endpoints).
    pub fn to_image(&self, i: usize, domain: ValueDomain) -> Result<ImageTensor, ImageError> {
        assert!(i < self.n);
        let per = self.h * self.w * self.c;
        let (lo, hi) = domain.interval();
        let data = self.data[i * per..(i + 1) * per]
            .iter()
            .map(|&v| v.clamp(lo, hi))
            .collect();
        ImageTensor::new(self.h, self.w, self.c, domain, data)
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(&self, b: &Tensor4) -> Tensor4 {
        assert!(
            self.n == b.n && self.h == b.h && self.w == b.w,
            "concat requires identical N, H, W"
        );
        let c = self.c + b.c;
        let mut data = Vec::with_capacity(self.n * self.h * self.w * c);
        for px in 0..self.n * self.h * self.w {
            data.extend_from_slice(&self.data[px * self.c..(px + 1) * self.c]);
            data.extend_from_slice(&b.data[px * b.c..(px + 1) * b.c]);
        }
        Tensor4 {
            n: self.n,
            h: self.h,
            w: self.w,
            c,
            data,
        }
    }

    /// Splits a channel-concatenated tensor back into two parts.
    pub fn split_channels(&self, c_first: usize) -> (Tensor4, Tensor4) {
        assert!(c_first < self.c);
        let c_second = self.c - c_first;
        let px_count = self.n * self.h * self.w;
        let mut first = Vec::with_capacity(px_count * c_first);
        let mut second = Vec::with_capacity(px_count * c_second);
        for px in 0..px_count {
            let base = px * self.c;
            first.extend_from_slice(&self.data[base..base + c_first]);
            second.extend_from_slice(&self.data[base + c_first..base + self.c]);
        }
        (
            Tensor4 {
                n: self.n,
                h: self.h,
                w: self.w,
                c: c_first,
                data: first,
            },
            Tensor4 {
                n: self.n,
                h: self.h,
                w: self.w,
                c: c_second,
                data: second,
            },
        )
    }

    /// Concatenates along the batch axis.
    pub fn concat_batch(&self, b: &Tensor4) -> Tensor4 {
        assert!(
            self.h == b.h && self.w == b.w && self.c == b.c,
            "batch concat requires identical H, W, C"
        );
        let mut data = Vec::with_capacity(self.data.len() + b.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&b.data);
        Tensor4 {
            n: self.n + b.n,
            h: self.h,
            w: self.w,
            c: self.c,
            data,
        }
    }

    /// Splits the batch axis after the first `n_first` items.
    pub fn split_batch(&self, n_first: usize) -> (Tensor4, Tensor4) {
        assert!(n_first < self.n);
        let per = self.h * self.w * self.c;
        let cut = n_first * per;
        (
            Tensor4 {
                n: n_first,
                h: self.h,
                w: self.w,
                c: self.c,
                data: self.data[..cut].to_vec(),
            },
            Tensor4 {
                n: self.n - n_first,
                h: self.h,
                w: self.w,
                c: self.c,
                data: self.data[cut..].to_vec(),
            },
        )
    }

    pub fn add_assign(&mut self, other: &Tensor4) {
        assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Mean of batch item `i`'s elements.
    pub fn item_mean(&self, i: usize) -> f64 {
        let per = self.h * self.w * self.c;
        let s: f64 = self.data[i * per..(i + 1) * per].iter().sum();
        s / per as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
