//! Training objectives for both generators and both discriminators.
//!
//! Scores coming out of a discriminator are patch maps; every objective
//! first reduces a map to a scalar per image by arithmetic mean, then
//! penalizes squared deviation from the class label (least-squares GAN).
//! The fusion generator additionally carries a content term that ties the
//! fused image to the real infrared pixels and its gradient field to the
//! visible image's gradient field.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::image::ImageTensor;
use crate::nn::Tensor4;

/// Operator used for the gradient-field term of the fusion loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientOp {
    /// 4-neighbor discrete Laplacian, replicate boundary.
    Laplacian,
    /// First-difference Sobel pair; the penalty sums both components.
    Sobel,
}

/// Scalar knobs of all four objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Multiplier on the fusion generator's visible-adversarial term.
    pub gamma: f64,
    /// Content term weight.
    pub lambda: f64,
    /// Gradient-field term weight inside the content term.
    pub xi: f64,
    /// Label the fusion generator drives D1 scores toward.
    pub c1_label: f64,
    /// Label the fusion generator drives D2 scores toward.
    pub c2_label: f64,
    /// Fake label used by both discriminators.
    pub a_label: f64,
    pub d1_real_label: f64,
    pub d2_real_label: f64,
    /// Divide content norms by H*W*C instead of H*W.
    pub content_norm_includes_channels: bool,
    pub gradient_op: GradientOp,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            lambda: 100.0,
            xi: 0.5,
            c1_label: 1.0,
            c2_label: 1.0,
            a_label: 0.0,
            d1_real_label: 1.0,
            d2_real_label: 1.0,
            content_norm_includes_channels: true,
            gradient_op: GradientOp::Laplacian,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        if self.gamma <= 0.0 || self.gamma.is_nan() {
            return Err(LossError::BadWeights("gamma must be positive"));
        }
        if self.lambda < 0.0 || self.xi < 0.0 {
            return Err(LossError::BadWeights("lambda and xi must be nonnegative"));
        }
        for v in [
            self.gamma,
            self.lambda,
            self.xi,
            self.c1_label,
            self.c2_label,
            self.a_label,
            self.d1_real_label,
            self.d2_real_label,
        ] {
            if !v.is_finite() {
                return Err(LossError::BadWeights("weights and labels must be finite"));
            }
        }
        Ok(())
    }
}

/// Per-step loss diagnostics. `g2_adv_d1` is stored before the gamma
/// multiplier, so `g2_total = gamma * g2_adv_d1 + g2_adv_d2 + g2_content`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub g1_total: f64,
    pub g2_total: f64,
    pub g2_adv_d1: f64,
    pub g2_adv_d2: f64,
    pub g2_content: f64,
    pub d1_total: f64,
    pub d2_total: f64,
}

impl LossReport {
    pub fn all_finite(&self) -> bool {
        [
            self.g1_total,
            self.g2_total,
            self.g2_adv_d1,
            self.g2_adv_d2,
            self.g2_content,
            self.d1_total,
            self.d2_total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    /// First non-finite field name, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        let fields = [
            ("g1_total", self.g1_total),
            ("g2_total", self.g2_total),
            ("g2_adv_d1", self.g2_adv_d1),
            ("g2_adv_d2", self.g2_adv_d2),
            ("g2_content", self.g2_content),
            ("d1_total", self.d1_total),
            ("d2_total", self.d2_total),
        ];
        fields.iter().find(|(_, v)| !v.is_finite()).map(|(n, _)| *n)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LossError {
    BadWeights(&'static str),
    BatchSizeMismatch {
        a: usize,
        b: usize,
    },
    ShapeMismatch,
    /// An input tensor contains NaN or infinity; names which one.
    NonFinite(&'static str),
}

impl core::fmt::Display for LossError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            LossError::BadWeights(msg) => write!(f, "invalid loss weights: {msg}"),
            LossError::BatchSizeMismatch { a, b } => {
                write!(f, "batch sizes differ: {a} vs {b}")
            }
            LossError::ShapeMismatch => write!(f, "loss inputs have inconsistent shapes"),
            LossError::NonFinite(term) => write!(f, "non-finite values in {term}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for LossError {}

/// (dy, dx, weight) taps of one linear filter, applied with replicate
/// (clamped-index) boundary handling.
type Taps = &'static [(i32, i32, f64)];

const LAPLACIAN: Taps = &[
    (0, 0, -4.0),
    (-1, 0, 1.0),
    (1, 0, 1.0),
    (0, -1, 1.0),
    (0, 1, 1.0),
];
const SOBEL_X: Taps = &[
    (-1, -1, -1.0),
    (0, -1, -2.0),
    (1, -1, -1.0),
    (-1, 1, 1.0),
    (0, 1, 2.0),
    (1, 1, 1.0),
];
const SOBEL_Y: Taps = &[
    (-1, -1, -1.0),
    (-1, 0, -2.0),
    (-1, 1, -1.0),
    (1, -1, 1.0),
    (1, 0, 2.0),
    (1, 1, 1.0),
];

fn op_components(op: GradientOp) -> &'static [Taps] {
    match op {
        GradientOp::Laplacian => &[LAPLACIAN],
        GradientOp::Sobel => &[SOBEL_X, SOBEL_Y],
    }
}

#[inline]
fn clamp_idx(v: i32, hi: usize) -> usize {
    v.clamp(0, hi as i32 - 1) as usize
}

fn apply_taps(x: &Tensor4, taps: Taps) -> Tensor4 {
    let mut out = Tensor4::zeros(x.n, x.h, x.w, x.c);
    for n in 0..x.n {
        for y in 0..x.h {
            for xx in 0..x.w {
                for &(dy, dx, wt) in taps {
                    let sy = clamp_idx(y as i32 + dy, x.h);
                    let sx = clamp_idx(xx as i32 + dx, x.w);
                    let src = ((n * x.h + sy) * x.w + sx) * x.c;
                    let dst = ((n * x.h + y) * x.w + xx) * x.c;
                    for ch in 0..x.c {
                        out.data[dst + ch] += wt * x.data[src + ch];
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`apply_taps`]: scatters each output gradient back onto the
/// clamped source cells, so filter-through-loss gradients are exact at the
/// borders too.
fn adjoint_taps(g: &Tensor4, taps: Taps) -> Tensor4 {
    let mut out = Tensor4::zeros(g.n, g.h, g.w, g.c);
    for n in 0..g.n {
        for y in 0..g.h {
            for xx in 0..g.w {
                for &(dy, dx, wt) in taps {
                    let sy = clamp_idx(y as i32 + dy, g.h);
                    let sx = clamp_idx(xx as i32 + dx, g.w);
                    let src = ((n * g.h + sy) * g.w + sx) * g.c;
                    let dst = ((n * g.h + y) * g.w + xx) * g.c;
                    for ch in 0..g.c {
                        out.data[src + ch] += wt * g.data[dst + ch];
                    }
                }
            }
        }
    }
    out
}

/// Discrete 4-neighbor Laplacian response of one image, per channel, with
/// replicate boundary. Returned as a raw tensor because responses are not
/// confined to any image value domain.
pub fn gradient_map(img: &ImageTensor) -> Tensor4 {
    let x = Tensor4::from_data(
        1,
        img.height(),
        img.width(),
        img.channels(),
        img.data().to_vec(),
    );
    apply_taps(&x, LAPLACIAN)
}

fn ensure_finite(t: &Tensor4, name: &'static str) -> Result<(), LossError> {
    if t.all_finite() {
        Ok(())
    } else {
        Err(LossError::NonFinite(name))
    }
}

/// Mean score of every map in a batch.
fn map_means(scores: &Tensor4) -> Vec<f64> {
    (0..scores.n).map(|i| scores.item_mean(i)).collect()
}

/// (1/N) N-mean of squared deviations of per-map means from a label.
fn adversarial_term(scores: &Tensor4, label: f64) -> f64 {
    let means = map_means(scores);
    means.iter().map(|m| (m - label) * (m - label)).sum::<f64>() / means.len() as f64
}

/// Gradient of [`adversarial_term`] w.r.t. every score element, times
/// `scale`. Each element of map i receives scale * (2/N) * (mean_i - label) / M.
fn adversarial_grad(scores: &Tensor4, label: f64, scale: f64) -> Tensor4 {
    let n = scores.n as f64;
    let m = (scores.h * scores.w * scores.c) as f64;
    let mut out = Tensor4::zeros(scores.n, scores.h, scores.w, scores.c);
    for i in 0..scores.n {
        let g = scale * 2.0 / n * (scores.item_mean(i) - label) / m;
        let per = scores.h * scores.w * scores.c;
        for v in &mut out.data[i * per..(i + 1) * per] {
            *v = g;
        }
    }
    out
}

fn content_scale(img: &Tensor4, w: &LossWeights) -> f64 {
    let denom = if w.content_norm_includes_channels {
        (img.h * img.w * img.c) as f64
    } else {
        (img.h * img.w) as f64
    };
    w.lambda / denom
}

fn sum_sq_diff(a: &Tensor4, b: &Tensor4) -> f64 {
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Value and components of the fusion generator's objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct G2Loss {
    /// Visible-adversarial term, before the gamma multiplier.
    pub adv_d1: f64,
    pub adv_d2: f64,
    pub content: f64,
    pub total: f64,
}

fn g2_check(
    fused_scores_d1: &Tensor4,
    fused_scores_d2: &Tensor4,
    fused: &Tensor4,
    real_ir: &Tensor4,
    visible: &Tensor4,
    w: &LossWeights,
) -> Result<(), LossError> {
    w.validate()?;
    for (t, name) in [
        (fused_scores_d1, "fused_scores_d1"),
        (fused_scores_d2, "fused_scores_d2"),
        (fused, "fused"),
        (real_ir, "real_ir"),
        (visible, "visible"),
    ] {
        ensure_finite(t, name)?;
    }
    let n = fused.n;
    for t in [fused_scores_d1, fused_scores_d2, real_ir, visible] {
        if t.n != n {
            return Err(LossError::BatchSizeMismatch { a: n, b: t.n });
        }
    }
    if !fused.same_shape(real_ir) || !fused.same_shape(visible) {
        return Err(LossError::ShapeMismatch);
    }
    Ok(())
}

/// Fusion generator objective: gamma-weighted least-squares deviation of
/// D1 scores from `c1_label`, the same against D2 and `c2_label`, plus the
/// content term lambda/(H*W[*C]) * (|fused - real_ir|^2 + xi * |grad fused
/// - grad visible|^2) summed over the whole batch.
pub fn g2_loss(
    fused_scores_d1: &Tensor4,
    fused_scores_d2: &Tensor4,
    fused: &Tensor4,
    real_ir: &Tensor4,
    visible: &Tensor4,
    w: &LossWeights,
) -> Result<G2Loss, LossError> {
    g2_check(fused_scores_d1, fused_scores_d2, fused, real_ir, visible, w)?;
    let adv_d1 = adversarial_term(fused_scores_d1, w.c1_label);
    let adv_d2 = adversarial_term(fused_scores_d2, w.c2_label);
    let scale = content_scale(fused, w);
    let mut content = sum_sq_diff(fused, real_ir);
    if w.xi != 0.0 {
        for taps in op_components(w.gradient_op) {
            let gf = apply_taps(fused, taps);
            let gv = apply_taps(visible, taps);
            content += w.xi * sum_sq_diff(&gf, &gv);
        }
    }
    content *= scale;
    let total = w.gamma * adv_d1 + adv_d2 + content;
    Ok(G2Loss {
        adv_d1,
        adv_d2,
        content,
        total,
    })
}

/// Gradients of the fusion objective w.r.t. its three network outputs.
pub struct G2Grads {
    pub d_scores_d1: Tensor4,
    pub d_scores_d2: Tensor4,
    pub d_fused: Tensor4,
}

pub fn g2_loss_grads(
    fused_scores_d1: &Tensor4,
    fused_scores_d2: &Tensor4,
    fused: &Tensor4,
    real_ir: &Tensor4,
    visible: &Tensor4,
    w: &LossWeights,
) -> Result<(G2Loss, G2Grads), LossError> {
    let loss = g2_loss(fused_scores_d1, fused_scores_d2, fused, real_ir, visible, w)?;
    let d_scores_d1 = adversarial_grad(fused_scores_d1, w.c1_label, w.gamma);
    let d_scores_d2 = adversarial_grad(fused_scores_d2, w.c2_label, 1.0);
    let scale = content_scale(fused, w);
    let mut d_fused = Tensor4::zeros(fused.n, fused.h, fused.w, fused.c);
    for (d, (f, r)) in d_fused
        .data
        .iter_mut()
        .zip(fused.data.iter().zip(&real_ir.data))
    {
        *d = scale * 2.0 * (f - r);
    }
    if w.xi != 0.0 {
        for taps in op_components(w.gradient_op) {
            let gf = apply_taps(fused, taps);
            let gv = apply_taps(visible, taps);
            let mut diff = gf;
            for (a, b) in diff.data.iter_mut().zip(&gv.data) {
                *a = scale * w.xi * 2.0 * (*a - b);
            }
            d_fused.add_assign(&adjoint_taps(&diff, taps));
        }
    }
    Ok((
        loss,
        G2Grads {
            d_scores_d1,
            d_scores_d2,
            d_fused,
        },
    ))
}

/// Synthetic-infrared generator objective: least-squares adversarial term
/// against D2's real label plus a lambda-weighted pixel content term tying
/// the generated infrared to the real one.
pub fn g1_loss(
    gen_ir_scores_d2: &Tensor4,
    gen_ir: &Tensor4,
    real_ir: &Tensor4,
    w: &LossWeights,
) -> Result<f64, LossError> {
    w.validate()?;
    ensure_finite(gen_ir_scores_d2, "gen_ir_scores_d2")?;
    ensure_finite(gen_ir, "gen_ir")?;
    ensure_finite(real_ir, "real_ir")?;
    if gen_ir_scores_d2.n != gen_ir.n {
        return Err(LossError::BatchSizeMismatch {
            a: gen_ir.n,
            b: gen_ir_scores_d2.n,
        });
    }
    if !gen_ir.same_shape(real_ir) {
        return Err(LossError::ShapeMismatch);
    }
    let adv = adversarial_term(gen_ir_scores_d2, w.d2_real_label);
    let content = content_scale(gen_ir, w) * sum_sq_diff(gen_ir, real_ir);
    Ok(adv + content)
}

pub struct G1Grads {
    pub d_scores: Tensor4,
    pub d_gen_ir: Tensor4,
}

pub fn g1_loss_grads(
    gen_ir_scores_d2: &Tensor4,
    gen_ir: &Tensor4,
    real_ir: &Tensor4,
    w: &LossWeights,
) -> Result<(f64, G1Grads), LossError> {
    let loss = g1_loss(gen_ir_scores_d2, gen_ir, real_ir, w)?;
    let d_scores = adversarial_grad(gen_ir_scores_d2, w.d2_real_label, 1.0);
    let scale = content_scale(gen_ir, w);
    let mut d_gen_ir = Tensor4::zeros(gen_ir.n, gen_ir.h, gen_ir.w, gen_ir.c);
    for (d, (g, r)) in d_gen_ir
        .data
        .iter_mut()
        .zip(gen_ir.data.iter().zip(&real_ir.data))
    {
        *d = scale * 2.0 * (g - r);
    }
    Ok((loss, G1Grads { d_scores, d_gen_ir }))
}

/// D1 objective: real visible scores toward the real label, fused-image
/// scores toward the fake label.
pub fn d1_loss(
    real_visible_scores: &Tensor4,
    fused_scores: &Tensor4,
    w: &LossWeights,
) -> Result<f64, LossError> {
    w.validate()?;
    ensure_finite(real_visible_scores, "real_visible_scores")?;
    ensure_finite(fused_scores, "fused_scores")?;
    if real_visible_scores.n != fused_scores.n {
        return Err(LossError::BatchSizeMismatch {
            a: real_visible_scores.n,
            b: fused_scores.n,
        });
    }
    Ok(adversarial_term(real_visible_scores, w.d1_real_label)
        + adversarial_term(fused_scores, w.a_label))
}

pub struct D1Grads {
    pub d_real: Tensor4,
    pub d_fused: Tensor4,
}

pub fn d1_loss_grads(
    real_visible_scores: &Tensor4,
    fused_scores: &Tensor4,
    w: &LossWeights,
) -> Result<(f64, D1Grads), LossError> {
    let loss = d1_loss(real_visible_scores, fused_scores, w)?;
    Ok((
        loss,
        D1Grads {
            d_real: adversarial_grad(real_visible_scores, w.d1_real_label, 1.0),
            d_fused: adversarial_grad(fused_scores, w.a_label, 1.0),
        },
    ))
}

/// D2 objective: real infrared scores toward the real label; the two fake
/// classes (generated infrared, fused) each toward the fake label with
/// equal half weights.
pub fn d2_loss(
    real_ir_scores: &Tensor4,
    gen_ir_scores: &Tensor4,
    fused_scores: &Tensor4,
    w: &LossWeights,
) -> Result<f64, LossError> {
    w.validate()?;
    ensure_finite(real_ir_scores, "real_ir_scores")?;
    ensure_finite(gen_ir_scores, "gen_ir_scores")?;
    ensure_finite(fused_scores, "fused_scores")?;
    for t in [gen_ir_scores, fused_scores] {
        if t.n != real_ir_scores.n {
            return Err(LossError::BatchSizeMismatch {
                a: real_ir_scores.n,
                b: t.n,
            });
        }
    }
    Ok(adversarial_term(real_ir_scores, w.d2_real_label)
        + 0.5 * adversarial_term(gen_ir_scores, w.a_label)
        + 0.5 * adversarial_term(fused_scores, w.a_label))
}

pub struct D2Grads {
    pub d_real: Tensor4,
    pub d_gen_ir: Tensor4,
    pub d_fused: Tensor4,
}

pub fn d2_loss_grads(
    real_ir_scores: &Tensor4,
    gen_ir_scores: &Tensor4,
    fused_scores: &Tensor4,
    w: &LossWeights,
) -> Result<(f64, D2Grads), LossError> {
    let loss = d2_loss(real_ir_scores, gen_ir_scores, fused_scores, w)?;
    Ok((
        loss,
        D2Grads {
            d_real: adversarial_grad(real_ir_scores, w.d2_real_label, 1.0),
            d_gen_ir: adversarial_grad(gen_ir_scores, w.a_label, 0.5),
            d_fused: adversarial_grad(fused_scores, w.a_label, 0.5),
        },
    ))
}
