//! Fusion-quality metrics: information entropy, correlation coefficient,
//! peak signal-to-noise ratio, and structural similarity.
//!
//! All four operate on file-domain images (the 0..255 scale); evaluation
//! code converts model outputs before measuring. Entropy and correlation
//! treat an image as a flat element vector; PSNR uses the elementwise MSE;
//! SSIM slides a uniform square window over every valid position of each
//! channel with population moments inside the window.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::image::{ImageTensor, ValueDomain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    /// Histogram bin count for entropy.
    pub entropy_levels: usize,
    /// Peak value for PSNR.
    pub psnr_max: f64,
    pub ssim_alpha: f64,
    pub ssim_beta: f64,
    pub ssim_gamma: f64,
    pub ssim_c1: f64,
    pub ssim_c2: f64,
    pub ssim_c3: f64,
    /// Side of the square sliding window, odd.
    pub ssim_window: usize,
    /// Reduce multichannel comparisons to luma before measuring instead of
    /// averaging per-channel results.
    pub luma_first: bool,
}

impl Default for MetricParams {
    fn default() -> Self {
        let c1 = (0.01 * 255.0) * (0.01 * 255.0);
        let c2 = (0.03 * 255.0) * (0.03 * 255.0);
        Self {
            entropy_levels: 256,
            psnr_max: 255.0,
            ssim_alpha: 1.0,
            ssim_beta: 1.0,
            ssim_gamma: 1.0,
            ssim_c1: c1,
            ssim_c2: c2,
            ssim_c3: c2 / 2.0,
            ssim_window: 11,
            luma_first: false,
        }
    }
}

impl MetricParams {
    pub fn validate(&self) -> Result<(), MetricError> {
        if self.entropy_levels < 2 {
            return Err(MetricError::BadParams("entropy_levels must be at least 2"));
        }
        if self.psnr_max <= 0.0 || self.psnr_max.is_nan() {
            return Err(MetricError::BadParams("psnr_max must be positive"));
        }
        if [self.ssim_c1, self.ssim_c2, self.ssim_c3]
            .iter()
            .any(|c| *c <= 0.0 || c.is_nan())
        {
            return Err(MetricError::BadParams("ssim constants must be positive"));
        }
        if self.ssim_window < 3 || self.ssim_window.is_multiple_of(2) {
            return Err(MetricError::BadParams("ssim_window must be odd and >= 3"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MetricError {
    BadParams(&'static str),
    /// Metrics run on the file-domain 0..255 scale.
    WrongDomain,
    ShapeMismatch,
    /// Correlation is undefined when either input has zero variance.
    ZeroVariance,
    WindowTooLarge {
        window: usize,
        height: usize,
        width: usize,
    },
}

impl core::fmt::Display for MetricError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MetricError::BadParams(msg) => write!(f, "invalid metric params: {msg}"),
            MetricError::WrongDomain => write!(f, "metrics expect file-domain images"),
            MetricError::ShapeMismatch => write!(f, "images have different shapes"),
            MetricError::ZeroVariance => write!(f, "correlation undefined for zero variance"),
            MetricError::WindowTooLarge {
                window,
                height,
                width,
            } => write!(f, "ssim window {window} exceeds image {height}x{width}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for MetricError {}

/// Per-item metric row in report order. `None` marks a cell whose metric
/// was undefined for this item (for example zero-variance correlation);
/// PSNR of identical images is `Some(+inf)`, not a marker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub en: Option<f64>,
    pub cc_ir: Option<f64>,
    pub cc_rgb: Option<f64>,
    pub psnr_ir: Option<f64>,
    pub psnr_rgb: Option<f64>,
    pub ssim_ir: Option<f64>,
    pub ssim_rgb: Option<f64>,
}

impl MetricRecord {
    pub const COLUMNS: [&'static str; 7] = [
        "en", "cc_ir", "cc_rgb", "psnr_ir", "psnr_rgb", "ssim_ir", "ssim_rgb",
    ];

    pub const fn empty() -> Self {
        Self {
            en: None,
            cc_ir: None,
            cc_rgb: None,
            psnr_ir: None,
            psnr_rgb: None,
            ssim_ir: None,
            ssim_rgb: None,
        }
    }

    pub fn cells(&self) -> [Option<f64>; 7] {
        [
            self.en,
            self.cc_ir,
            self.cc_rgb,
            self.psnr_ir,
            self.psnr_rgb,
            self.ssim_ir,
            self.ssim_rgb,
        ]
    }
}

/// Arithmetic-mean aggregate over defined cells, plus how many records
/// were excluded per column for being undefined.
pub fn aggregate(records: &[MetricRecord]) -> (MetricRecord, [usize; 7]) {
    let mut sums = [0.0f64; 7];
    let mut counts = [0usize; 7];
    let mut excluded = [0usize; 7];
    for r in records {
        for (i, cell) in r.cells().iter().enumerate() {
            match cell {
                Some(v) => {
                    sums[i] += v;
                    counts[i] += 1;
                }
                None => excluded[i] += 1,
            }
        }
    }
    let mean = |i: usize| (counts[i] > 0).then(|| sums[i] / counts[i] as f64);
    (
        MetricRecord {
            en: mean(0),
            cc_ir: mean(1),
            cc_rgb: mean(2),
            psnr_ir: mean(3),
            psnr_rgb: mean(4),
            ssim_ir: mean(5),
            ssim_rgb: mean(6),
        },
        excluded,
    )
}

fn require_file_domain(img: &ImageTensor) -> Result<(), MetricError> {
    if img.domain() != ValueDomain::FileU8 {
        return Err(MetricError::WrongDomain);
    }
    Ok(())
}

fn require_same_shape(a: &ImageTensor, b: &ImageTensor) -> Result<(), MetricError> {
    if a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels() {
        return Err(MetricError::ShapeMismatch);
    }
    Ok(())
}

/// Information entropy in bits over the L-bin histogram of all elements.
pub fn entropy(img: &ImageTensor, p: &MetricParams) -> Result<f64, MetricError> {
    p.validate()?;
    require_file_domain(img)?;
    let l = p.entropy_levels;
    let mut hist = vec![0u64; l];
    for &v in img.data() {
        let bin = ((v * l as f64 / 256.0) as usize).min(l - 1);
        hist[bin] += 1;
    }
    let total = img.data().len() as f64;
    let mut en = 0.0;
    for &count in &hist {
        if count > 0 {
            let pl = count as f64 / total;
            en -= pl * libm::log2(pl);
        }
    }
    Ok(en)
}

/// Pearson correlation coefficient over flattened elements.
pub fn correlation(x: &ImageTensor, y: &ImageTensor) -> Result<f64, MetricError> {
    require_same_shape(x, y)?;
    let n = x.data().len() as f64;
    let mx = x.data().iter().sum::<f64>() / n;
    let my = y.data().iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&a, &b) in x.data().iter().zip(y.data()) {
        let dx = a - mx;
        let dy = b - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    Ok((cov / libm::sqrt(vx * vy)).clamp(-1.0, 1.0))
}

/// Peak signal-to-noise ratio in dB; identical inputs produce +infinity.
pub fn psnr(
    reference: &ImageTensor,
    test: &ImageTensor,
    p: &MetricParams,
) -> Result<f64, MetricError> {
    p.validate()?;
    require_same_shape(reference, test)?;
    if reference.domain() != test.domain() {
        return Err(MetricError::WrongDomain);
    }
    let n = reference.data().len() as f64;
    let mse = reference
        .data()
        .iter()
        .zip(test.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * libm::log10(p.psnr_max * p.psnr_max / mse))
}

fn powf_or_identity(base: f64, exp: f64) -> f64 {
    if exp == 1.0 {
        base
    } else {
        libm::pow(base, exp)
    }
}

/// Windowed moments of one channel pair at one window origin.
struct WindowMoments {
    mean_x: f64,
    mean_y: f64,
    var_x: f64,
    var_y: f64,
    cov: f64,
}

fn window_moments(
    x: &ImageTensor,
    y: &ImageTensor,
    ch: usize,
    y0: usize,
    x0: usize,
    win: usize,
) -> WindowMoments {
    let n = (win * win) as f64;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for dy in 0..win {
        for dx in 0..win {
            sx += x.get(y0 + dy, x0 + dx, ch);
            sy += y.get(y0 + dy, x0 + dx, ch);
        }
    }
    let mean_x = sx / n;
    let mean_y = sy / n;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    let mut cov = 0.0;
    for dy in 0..win {
        for dx in 0..win {
            let a = x.get(y0 + dy, x0 + dx, ch) - mean_x;
            let b = y.get(y0 + dy, x0 + dx, ch) - mean_y;
            var_x += a * a;
            var_y += b * b;
            cov += a * b;
        }
    }
    WindowMoments {
        mean_x,
        mean_y,
        var_x: var_x / n,
        var_y: var_y / n,
        cov: cov / n,
    }
}

/// Structural similarity: the three-factor luminance/contrast/structure
/// product with exponents alpha/beta/gamma, averaged over every valid
/// window position of every channel.
pub fn ssim(x: &ImageTensor, y: &ImageTensor, p: &MetricParams) -> Result<f64, MetricError> {
    p.validate()?;
    require_same_shape(x, y)?;
    if x.domain() != y.domain() {
        return Err(MetricError::WrongDomain);
    }
    let win = p.ssim_window;
    let (h, w) = (x.height(), x.width());
    if win > h || win > w {
        return Err(MetricError::WindowTooLarge {
            window: win,
            height: h,
            width: w,
        });
    }
    let mut acc = 0.0;
    let mut count = 0usize;
    for ch in 0..x.channels() {
        for y0 in 0..=(h - win) {
            for x0 in 0..=(w - win) {
                let m = window_moments(x, y, ch, y0, x0, win);
                let sx = libm::sqrt(m.var_x);
                let sy = libm::sqrt(m.var_y);
                let l = (2.0 * m.mean_x * m.mean_y + p.ssim_c1)
                    / (m.mean_x * m.mean_x + m.mean_y * m.mean_y + p.ssim_c1);
                let c = (2.0 * sx * sy + p.ssim_c2) / (m.var_x + m.var_y + p.ssim_c2);
                let s = (m.cov + p.ssim_c3) / (sx * sy + p.ssim_c3);
                acc += powf_or_identity(l, p.ssim_alpha)
                    * powf_or_identity(c, p.ssim_beta)
                    * powf_or_identity(s, p.ssim_gamma);
                count += 1;
            }
        }
    }
    Ok(acc / count as f64)
}

/// Comparison pair reduced per the multichannel policy: either per-channel
/// slices (averaged by the caller) or a single luma pair.
fn channel_pairs(
    a: &ImageTensor,
    b: &ImageTensor,
    p: &MetricParams,
) -> Vec<(ImageTensor, ImageTensor)> {
    if p.luma_first && a.channels() == 3 {
        vec![(a.to_luma(), b.to_luma())]
    } else {
        (0..a.channels())
            .map(|c| (a.channel(c), b.channel(c)))
            .collect()
    }
}

fn mean_over_channels<F>(a: &ImageTensor, b: &ImageTensor, p: &MetricParams, f: F) -> Option<f64>
where
    F: Fn(&ImageTensor, &ImageTensor) -> Result<f64, MetricError>,
{
    let pairs = channel_pairs(a, b, p);
    let mut acc = 0.0;
    for (pa, pb) in &pairs {
        acc += f(pa, pb).ok()?;
    }
    Some(acc / pairs.len() as f64)
}

/// Full report row for one fusion triple: entropy of the fused image,
/// then correlation / PSNR / SSIM of fused-vs-infrared and
/// fused-vs-visible. Value-level failures (zero variance) become `None`
/// cells; structural problems (shape or domain mismatch) fail the item.
pub fn evaluate_triple(
    visible: &ImageTensor,
    real_ir: &ImageTensor,
    fused: &ImageTensor,
    p: &MetricParams,
) -> Result<MetricRecord, MetricError> {
    p.validate()?;
    for img in [visible, real_ir, fused] {
        require_file_domain(img)?;
    }
    let ir3 = if real_ir.channels() == 1 {
        real_ir.replicate_to_3()
    } else {
        real_ir.clone()
    };
    require_same_shape(fused, visible)?;
    require_same_shape(fused, &ir3)?;
    Ok(MetricRecord {
        en: entropy(fused, p).ok(),
        cc_ir: mean_over_channels(fused, &ir3, p, correlation),
        cc_rgb: mean_over_channels(fused, visible, p, correlation),
        psnr_ir: mean_over_channels(&ir3, fused, p, |a, b| psnr(a, b, p)),
        psnr_rgb: mean_over_channels(visible, fused, p, |a, b| psnr(a, b, p)),
        ssim_ir: mean_over_channels(fused, &ir3, p, |a, b| ssim(a, b, p)),
        ssim_rgb: mean_over_channels(fused, visible, p, |a, b| ssim(a, b, p)),
    })
}

/// Report row for a generated infrared image against the real one:
/// entropy of the generated image plus the three comparison metrics in the
/// `_ir` slots; `_rgb` slots stay empty.
pub fn evaluate_generated_ir(
    real_ir: &ImageTensor,
    gen_ir: &ImageTensor,
    p: &MetricParams,
) -> Result<MetricRecord, MetricError> {
    p.validate()?;
    require_file_domain(real_ir)?;
    require_file_domain(gen_ir)?;
    let ir3 = if real_ir.channels() == 1 {
        real_ir.replicate_to_3()
    } else {
        real_ir.clone()
    };
    let gen3 = if gen_ir.channels() == 1 {
        gen_ir.replicate_to_3()
    } else {
        gen_ir.clone()
    };
    require_same_shape(&gen3, &ir3)?;
    Ok(MetricRecord {
        en: entropy(&gen3, p).ok(),
        cc_ir: mean_over_channels(&gen3, &ir3, p, correlation),
        cc_rgb: None,
        psnr_ir: mean_over_channels(&ir3, &gen3, p, |a, b| psnr(a, b, p)),
        psnr_rgb: None,
        ssim_ir: mean_over_channels(&gen3, &ir3, p, |a, b| ssim(a, b, p)),
        ssim_rgb: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn gray(h: usize, w: usize, data: Vec<f64>) -> ImageTensor {
        ImageTensor::new(h, w, 1, ValueDomain::FileU8, data).unwrap()
    }

    fn random_file_image(h: usize, w: usize, c: usize, seed: u64) -> ImageTensor {
        let mut rng = crate::nn::seeded_rng(seed);
        let data = (0..h * w * c)
            .map(|_| rng.random_range(0.0..255.0))
            .collect();
        ImageTensor::new(h, w, c, ValueDomain::FileU8, data).unwrap()
    }

    #[test]
    fn entropy_of_constant_is_zero() {
        let img = ImageTensor::filled(4, 4, 3, ValueDomain::FileU8, 37.0).unwrap();
        assert_eq!(entropy(&img, &MetricParams::default()).unwrap(), 0.0);
    }

    #[test]
    fn entropy_of_uniform_256_levels_is_eight_bits() {
        let data: Vec<f64> = (0..256).map(|i| i as f64).collect();
        let img = gray(16, 16, data);
        let en = entropy(&img, &MetricParams::default()).unwrap();
        assert!((en - 8.0).abs() < 1e-12, "en={en}");
    }

    #[test]
    fn entropy_of_two_equal_bins_is_one_bit() {
        let mut data = vec![0.0; 64];
        for v in data.iter_mut().skip(32) {
            *v = 255.0;
        }
        let img = gray(8, 8, data);
        let en = entropy(&img, &MetricParams::default()).unwrap();
        assert!((en - 1.0).abs() < 1e-12, "en={en}");
    }

    #[test]
    fn entropy_is_permutation_invariant_and_bounded() {
        let img = random_file_image(8, 8, 1, 5);
        let p = MetricParams::default();
        let a = entropy(&img, &p).unwrap();
        let mut data = img.data().to_vec();
        data.reverse();
        let b = entropy(&gray(8, 8, data), &p).unwrap();
        assert_eq!(a, b);
        assert!(a >= 0.0 && a <= libm::log2(p.entropy_levels as f64));
    }

    #[test]
    fn entropy_rejects_model_domain() {
        let img = ImageTensor::filled(2, 2, 1, ValueDomain::ModelSigned, 0.0).unwrap();
        assert_eq!(
            entropy(&img, &MetricParams::default()),
            Err(MetricError::WrongDomain)
        );
    }

    #[test]
    fn entropy_supports_finer_histograms() {
        // continuous data occupies more bins at L=1024 than at L=256
        let img = random_file_image(16, 16, 1, 9);
        let coarse = entropy(&img, &MetricParams::default()).unwrap();
        let fine = entropy(
            &img,
            &MetricParams {
                entropy_levels: 1024,
                ..MetricParams::default()
            },
        )
        .unwrap();
        assert!(fine >= coarse - 1e-12);
    }

    #[test]
    fn correlation_oracle_cases() {
        let x = gray(2, 2, vec![0.0, 1.0, 2.0, 3.0]);
        let y = gray(2, 2, vec![1.0, 3.0, 2.0, 4.0]);
        let cc = correlation(&x, &y).unwrap();
        assert!((cc - 0.8).abs() < 1e-12, "cc={cc}");
        assert_eq!(correlation(&x, &x).unwrap(), 1.0);
        let inv = gray(2, 2, x.data().iter().map(|v| 255.0 - v).collect());
        assert_eq!(correlation(&x, &inv).unwrap(), -1.0);
    }

    #[test]
    fn correlation_is_affine_invariant() {
        let x = random_file_image(6, 6, 1, 11);
        let y = random_file_image(6, 6, 1, 12);
        let base = correlation(&x, &y).unwrap();
        let ax = gray(6, 6, x.data().iter().map(|v| 0.5 * v + 10.0).collect());
        let scaled = correlation(&ax, &y).unwrap();
        assert!((base - scaled).abs() < 1e-9);
        let neg = gray(6, 6, x.data().iter().map(|v| 200.0 - 0.5 * v).collect());
        let flipped = correlation(&neg, &y).unwrap();
        assert!((base + flipped).abs() < 1e-9);
    }

    #[test]
    fn correlation_zero_variance_is_an_error_not_nan() {
        let x = ImageTensor::filled(3, 3, 1, ValueDomain::FileU8, 20.0).unwrap();
        let y = random_file_image(3, 3, 1, 13);
        assert_eq!(correlation(&x, &y), Err(MetricError::ZeroVariance));
    }

    #[test]
    fn psnr_oracles() {
        let p = MetricParams::default();
        let zero = ImageTensor::filled(4, 4, 1, ValueDomain::FileU8, 0.0).unwrap();
        let full = ImageTensor::filled(4, 4, 1, ValueDomain::FileU8, 255.0).unwrap();
        assert_eq!(psnr(&zero, &zero, &p).unwrap(), f64::INFINITY);
        assert!(psnr(&zero, &full, &p).unwrap().abs() < 1e-12);
        // unit MSE: every element differs by exactly 1
        let one = ImageTensor::filled(4, 4, 1, ValueDomain::FileU8, 1.0).unwrap();
        let db = psnr(&zero, &one, &p).unwrap();
        assert!((db - 48.130803608679344).abs() < 1e-9, "db={db}");
    }

    #[test]
    fn psnr_decreases_with_noise_amplitude() {
        let p = MetricParams::default();
        let x = ImageTensor::filled(4, 4, 1, ValueDomain::FileU8, 100.0).unwrap();
        let mut last = f64::INFINITY;
        for amp in [1.0, 2.0, 4.0, 8.0] {
            let noisy = ImageTensor::filled(4, 4, 1, ValueDomain::FileU8, 100.0 + amp).unwrap();
            let db = psnr(&x, &noisy, &p).unwrap();
            assert!(db < last);
            last = db;
        }
    }

    #[test]
    fn ssim_of_identical_images_is_one() {
        let p = MetricParams {
            ssim_window: 5,
            ..MetricParams::default()
        };
        let x = random_file_image(8, 8, 3, 17);
        let s = ssim(&x, &x, &p).unwrap();
        assert!((s - 1.0).abs() < 1e-12, "s={s}");
    }

    #[test]
    fn ssim_against_constant_is_below_one() {
        let p = MetricParams {
            ssim_window: 5,
            ..MetricParams::default()
        };
        let x = random_file_image(8, 8, 1, 19);
        let c = ImageTensor::filled(8, 8, 1, ValueDomain::FileU8, 128.0).unwrap();
        let s = ssim(&x, &c, &p).unwrap();
        assert!(s < 1.0);
    }

    #[test]
    fn ssim_is_symmetric_with_unit_exponents() {
        let p = MetricParams {
            ssim_window: 7,
            ..MetricParams::default()
        };
        let x = random_file_image(10, 10, 1, 23);
        let y = random_file_image(10, 10, 1, 29);
        let a = ssim(&x, &y, &p).unwrap();
        let b = ssim(&y, &x, &p).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn three_factor_form_matches_simplified_ssim() {
        // with alpha=beta=gamma=1 and c3 = c2/2 the product collapses to
        // the common two-term formula; check against a direct transcription
        let p = MetricParams {
            ssim_window: 5,
            ..MetricParams::default()
        };
        let x = random_file_image(16, 16, 1, 31);
        let y = random_file_image(16, 16, 1, 37);
        let got = ssim(&x, &y, &p).unwrap();
        let win = p.ssim_window;
        let mut acc = 0.0;
        let mut count = 0;
        for y0 in 0..=(16 - win) {
            for x0 in 0..=(16 - win) {
                let m = window_moments(&x, &y, 0, y0, x0, win);
                let num = (2.0 * m.mean_x * m.mean_y + p.ssim_c1) * (2.0 * m.cov + p.ssim_c2);
                let den = (m.mean_x * m.mean_x + m.mean_y * m.mean_y + p.ssim_c1)
                    * (m.var_x + m.var_y + p.ssim_c2);
                acc += num / den;
                count += 1;
            }
        }
        let oracle = acc / count as f64;
        assert!((got - oracle).abs() < 1e-9, "got={got} oracle={oracle}");
    }

    #[test]
    fn ssim_rejects_oversized_window() {
        let p = MetricParams::default();
        let x = random_file_image(8, 8, 1, 41);
        assert!(matches!(
            ssim(&x, &x, &p),
            Err(MetricError::WindowTooLarge { window: 11, .. })
        ));
    }

    #[test]
    fn evaluate_triple_on_identical_images() {
        let p = MetricParams {
            ssim_window: 5,
            ..MetricParams::default()
        };
        let img = random_file_image(12, 12, 3, 43);
        let rec = evaluate_triple(&img, &img, &img, &p).unwrap();
        assert_eq!(rec.cc_ir, Some(1.0));
        assert_eq!(rec.cc_rgb, Some(1.0));
        assert_eq!(rec.psnr_ir, Some(f64::INFINITY));
        assert_eq!(rec.psnr_rgb, Some(f64::INFINITY));
        assert!((rec.ssim_ir.unwrap() - 1.0).abs() < 1e-12);
        assert!((rec.ssim_rgb.unwrap() - 1.0).abs() < 1e-12);
        assert!(rec.en.unwrap() > 0.0);
    }

    #[test]
    fn evaluate_triple_marks_undefined_cells() {
        let p = MetricParams {
            ssim_window: 5,
            ..MetricParams::default()
        };
        let vis = random_file_image(8, 8, 3, 47);
        let flat_ir = ImageTensor::filled(8, 8, 1, ValueDomain::FileU8, 90.0).unwrap();
        let fused = random_file_image(8, 8, 3, 53);
        let rec = evaluate_triple(&vis, &flat_ir, &fused, &p).unwrap();
        assert_eq!(rec.cc_ir, None); // zero-variance reference
        assert!(rec.cc_rgb.is_some());
        assert!(rec.psnr_ir.is_some()); // psnr tolerates flat references
    }

    #[test]
    fn evaluate_generated_ir_fills_only_ir_slots() {
        let p = MetricParams {
            ssim_window: 5,
            ..MetricParams::default()
        };
        let real = random_file_image(8, 8, 3, 59);
        let rec = evaluate_generated_ir(&real, &real, &p).unwrap();
        assert_eq!(rec.cc_ir, Some(1.0));
        assert_eq!(rec.cc_rgb, None);
        assert_eq!(rec.psnr_rgb, None);
        assert_eq!(rec.ssim_rgb, None);
    }

    #[test]
    fn aggregate_averages_defined_cells_and_counts_exclusions() {
        let a = MetricRecord {
            en: Some(2.0),
            cc_ir: Some(0.5),
            ..MetricRecord::empty()
        };
        let b = MetricRecord {
            en: Some(4.0),
            cc_ir: None,
            ..MetricRecord::empty()
        };
        let (agg, excluded) = aggregate(&[a, b]);
        assert_eq!(agg.en, Some(3.0));
        assert_eq!(agg.cc_ir, Some(0.5));
        assert_eq!(agg.cc_rgb, None);
        assert_eq!(excluded[0], 0);
        assert_eq!(excluded[1], 1);
        assert_eq!(excluded[2], 2);
    }

    #[test]
    fn luma_first_policy_changes_channel_reduction() {
        let p = MetricParams {
            ssim_window: 5,
            luma_first: true,
            ..MetricParams::default()
        };
        let vis = random_file_image(8, 8, 3, 61);
        let ir = random_file_image(8, 8, 3, 67);
        let rec = evaluate_triple(&vis, &ir, &vis, &p).unwrap();
        // fused == visible still yields exact agreement under luma
        assert_eq!(rec.cc_rgb, Some(1.0));
        assert_eq!(rec.psnr_rgb, Some(f64::INFINITY));
    }
}
