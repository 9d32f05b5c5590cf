use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::norm::SpectralNorm;
use super::{Mode, ParamVisitor, StateVisitor, Tensor4};

pub(crate) const INIT_STD: f64 = 0.02;

pub(crate) fn gaussian_init(len: usize, std: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let dist = Normal::new(0.0, std).expect("valid std");
    (0..len).map(|_| dist.sample(rng)).collect()
}

struct ConvCache {
    input: Tensor4,
    /// Normalized weight actually applied, when spectral norm is on.
    effective_weight: Option<Vec<f64>>,
    sigma: f64,
    sn_u: Vec<f64>,
    sn_v: Vec<f64>,
}

/// Strided 2-D convolution, weight (ky, kx, cin, cout), optional spectral
/// normalization of the weight viewed as a (ky*kx*cin) x cout matrix.
pub struct Conv2d {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub grad_weight: Vec<f64>,
    pub grad_bias: Vec<f64>,
    pub spectral: Option<SpectralNorm>,
    /// Power iterations performed per training forward; 0 freezes the
    /// singular vectors (used by gradient checks).
    pub sn_train_iters: usize,
    cache: Option<ConvCache>,
}

impl core::fmt::Debug for Conv2d {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "Conv2d({}x{}, {}->{}, s{} p{}{})",
            self.kernel,
            self.kernel,
            self.cin,
            self.cout,
            self.stride,
            self.pad,
            if self.spectral.is_some() { ", sn" } else { "" }
        )
    }
}

impl Clone for Conv2d {
    fn clone(&self) -> Self {
        Self {
            cin: self.cin,
            cout: self.cout,
            kernel: self.kernel,
            stride: self.stride,
            pad: self.pad,
            weight: self.weight.clone(),
            bias: self.bias.clone(),
            grad_weight: self.grad_weight.clone(),
            grad_bias: self.grad_bias.clone(),
            spectral: self.spectral.clone(),
            sn_train_iters: self.sn_train_iters,
            cache: None,
        }
    }
}

impl Conv2d {
    pub fn new(
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        spectral_norm: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let wlen = kernel * kernel * cin * cout;
        let weight = gaussian_init(wlen, INIT_STD, rng);
        let spectral = spectral_norm.then(|| SpectralNorm::new(kernel * kernel * cin, cout, rng));
        Self {
            cin,
            cout,
            kernel,
            stride,
            pad,
            weight,
            bias: vec![0.0; cout],
            grad_weight: vec![0.0; wlen],
            grad_bias: vec![0.0; cout],
            spectral,
            sn_train_iters: 1,
            cache: None,
        }
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.kernel) / self.stride + 1,
            (w + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }

    /// Weight as applied in the forward pass (spectrally normalized when
    /// enabled), without advancing the power iteration.
    pub fn effective_weight(&self) -> Vec<f64> {
        match &self.spectral {
            Some(sn) => {
                let sigma = sn.sigma(&self.weight);
                self.weight.iter().map(|&v| v / sigma).collect()
            }
            None => self.weight.clone(),
        }
    }

    pub fn forward(&mut self, x: &Tensor4, mode: Mode) -> Tensor4 {
        assert_eq!(x.c, self.cin, "input channels");
        let (mut sigma, mut sn_u, mut sn_v) = (1.0, Vec::new(), Vec::new());
        let weight = if let Some(sn) = &mut self.spectral {
            if mode == Mode::Train {
                sn.power_iterate(&self.weight, self.sn_train_iters);
            }
            sigma = sn.sigma(&self.weight);
            sn_u = sn.u.clone();
            sn_v = sn.v.clone();
            self.weight.iter().map(|&v| v / sigma).collect()
        } else {
            self.weight.clone()
        };
        let out = self.conv_forward(x, &weight);
        if mode == Mode::Train {
            self.cache = Some(ConvCache {
                input: x.clone(),
                effective_weight: self.spectral.is_some().then_some(weight),
                sigma,
                sn_u,
                sn_v,
            });
        }
        out
    }

    fn conv_forward(&self, x: &Tensor4, weight: &[f64]) -> Tensor4 {
        let (oh, ow) = self.output_size(x.h, x.w);
        let (k, s, p, cin, cout) = (self.kernel, self.stride, self.pad, self.cin, self.cout);
        let mut out = Tensor4::zeros(x.n, oh, ow, cout);
        for n in 0..x.n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let out_base = ((n * oh + oy) * ow + ox) * cout;
                    let acc = &mut out.data[out_base..out_base + cout];
                    acc.copy_from_slice(&self.bias);
                    for ky in 0..k {
                        let iy = (oy * s + ky).wrapping_sub(p);
                        if iy >= x.h {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * s + kx).wrapping_sub(p);
                            if ix >= x.w {
                                continue;
                            }
                            let in_base = ((n * x.h + iy) * x.w + ix) * cin;
                            let w_base = ((ky * k + kx) * cin) * cout;
                            for ci in 0..cin {
                                let a = x.data[in_base + ci];
                                let wrow = &weight[w_base + ci * cout..w_base + (ci + 1) * cout];
                                for (o, &wv) in acc.iter_mut().zip(wrow) {
                                    *o += a * wv;
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Backward through the cached training forward. Accumulates parameter
    /// gradients and returns the input gradient.
    pub fn backward(&mut self, grad_out: &Tensor4) -> Tensor4 {
        let cache = self.cache.take().expect("backward without forward");
        let x = &cache.input;
        let (oh, ow) = self.output_size(x.h, x.w);
        assert_eq!((grad_out.h, grad_out.w, grad_out.c), (oh, ow, self.cout));
        let (k, s, p, cin, cout) = (self.kernel, self.stride, self.pad, self.cin, self.cout);
        let weight: &[f64] = cache.effective_weight.as_deref().unwrap_or(&self.weight);
        let mut grad_in = Tensor4::zeros(x.n, x.h, x.w, cin);
        let wlen = self.weight.len();
        // Gradient w.r.t. the weight that was applied; mapped through the
        // normalization below when spectral norm is on.
        let mut grad_eff = vec![0.0; wlen];
        for n in 0..x.n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let g_base = ((n * oh + oy) * ow + ox) * cout;
                    let g = &grad_out.data[g_base..g_base + cout];
                    for (gb, &gv) in self.grad_bias.iter_mut().zip(g) {
                        *gb += gv;
                    }
                    for ky in 0..k {
                        let iy = (oy * s + ky).wrapping_sub(p);
                        if iy >= x.h {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * s + kx).wrapping_sub(p);
                            if ix >= x.w {
                                continue;
                            }
                            let in_base = ((n * x.h + iy) * x.w + ix) * cin;
                            let w_base = ((ky * k + kx) * cin) * cout;
                            for ci in 0..cin {
                                let a = x.data[in_base + ci];
                                let row = w_base + ci * cout;
                                let mut dot = 0.0;
                                for co in 0..cout {
                                    grad_eff[row + co] += a * g[co];
                                    dot += weight[row + co] * g[co];
                                }
                                grad_in.data[in_base + ci] += dot;
                            }
                        }
                    }
                }
            }
        }
        match &self.spectral {
            Some(_) => {
                // W_hat = W / sigma with sigma = v^T W u taken as a constant
                // in u, v: dL/dW = G/sigma - (<G, W_hat>/sigma) v u^T.
                let sigma = cache.sigma;
                let what: &[f64] = weight;
                let inner: f64 = grad_eff.iter().zip(what).map(|(g, w)| g * w).sum();
                let coef = inner / sigma;
                let cout_n = cout;
                for j in 0..wlen / cout_n {
                    let vj = cache.sn_v[j];
                    for co in 0..cout_n {
                        self.grad_weight[j * cout_n + co] +=
                            grad_eff[j * cout_n + co] / sigma - coef * vj * cache.sn_u[co];
                    }
                }
            }
            None => {
                for (gw, ge) in self.grad_weight.iter_mut().zip(&grad_eff) {
                    *gw += ge;
                }
            }
        }
        grad_in
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.iter_mut().for_each(|v| *v = 0.0);
        self.grad_bias.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_>) {
        f(
            format!("{prefix}/conv/weight"),
            &mut self.weight,
            &self.grad_weight,
        );
        f(
            format!("{prefix}/conv/bias"),
            &mut self.bias,
            &self.grad_bias,
        );
    }

    pub fn visit_state(&mut self, prefix: &str, f: &mut StateVisitor<'_>) {
        let (k, cin, cout) = (self.kernel, self.cin, self.cout);
        f(
            format!("{prefix}/conv/weight"),
            &[k, k, cin, cout],
            &mut self.weight,
        );
        f(format!("{prefix}/conv/bias"), &[cout], &mut self.bias);
        if let Some(sn) = &mut self.spectral {
            f(format!("{prefix}/conv/sn_u"), &[cout], &mut sn.u);
            f(format!("{prefix}/conv/sn_v"), &[k * k * cin], &mut sn.v);
        }
    }
}

struct TransposeCache {
    input: Tensor4,
}

/// Fractionally-strided (transposed) convolution, weight (ky, kx, cin, cout).
/// Output size is (h-1)*stride - 2*pad + kernel.
pub struct ConvTranspose2d {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub grad_weight: Vec<f64>,
    pub grad_bias: Vec<f64>,
    cache: Option<TransposeCache>,
}

impl core::fmt::Debug for ConvTranspose2d {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "ConvTranspose2d({}x{}, {}->{}, s{} p{})",
            self.kernel, self.kernel, self.cin, self.cout, self.stride, self.pad
        )
    }
}

impl Clone for ConvTranspose2d {
    fn clone(&self) -> Self {
        Self {
            cin: self.cin,
            cout: self.cout,
            kernel: self.kernel,
            stride: self.stride,
            pad: self.pad,
            weight: self.weight.clone(),
            bias: self.bias.clone(),
            grad_weight: self.grad_weight.clone(),
            grad_bias: self.grad_bias.clone(),
            cache: None,
        }
    }
}

impl ConvTranspose2d {
    pub fn new(
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let wlen = kernel * kernel * cin * cout;
        Self {
            cin,
            cout,
            kernel,
            stride,
            pad,
            weight: gaussian_init(wlen, INIT_STD, rng),
            bias: vec![0.0; cout],
            grad_weight: vec![0.0; wlen],
            grad_bias: vec![0.0; cout],
            cache: None,
        }
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h - 1) * self.stride + self.kernel - 2 * self.pad,
            (w - 1) * self.stride + self.kernel - 2 * self.pad,
        )
    }

    pub fn forward(&mut self, x: &Tensor4, mode: Mode) -> Tensor4 {
        assert_eq!(x.c, self.cin, "input channels");
        let (oh, ow) = self.output_size(x.h, x.w);
        let (k, s, p, cin, cout) = (self.kernel, self.stride, self.pad, self.cin, self.cout);
        let mut out = Tensor4::zeros(x.n, oh, ow, cout);
        for px in 0..x.n * oh * ow {
            out.data[px * cout..(px + 1) * cout].copy_from_slice(&self.bias);
        }
        for n in 0..x.n {
            for y in 0..x.h {
                for x_ in 0..x.w {
                    let in_base = ((n * x.h + y) * x.w + x_) * cin;
                    for ky in 0..k {
                        let oy = (y * s + ky).wrapping_sub(p);
                        if oy >= oh {
                            continue;
                        }
                        for kx in 0..k {
                            let ox = (x_ * s + kx).wrapping_sub(p);
                            if ox >= ow {
                                continue;
                            }
                            let out_base = ((n * oh + oy) * ow + ox) * cout;
                            let w_base = ((ky * k + kx) * cin) * cout;
                            let acc = &mut out.data[out_base..out_base + cout];
                            for ci in 0..cin {
                                let a = x.data[in_base + ci];
                                let wrow =
                                    &self.weight[w_base + ci * cout..w_base + (ci + 1) * cout];
                                for (o, &wv) in acc.iter_mut().zip(wrow) {
                                    *o += a * wv;
                                }
                            }
                        }
                    }
                }
            }
        }
        if mode == Mode::Train {
            self.cache = Some(TransposeCache { input: x.clone() });
        }
        out
    }

    pub fn backward(&mut self, grad_out: &Tensor4) -> Tensor4 {
        let cache = self.cache.take().expect("backward without forward");
        let x = &cache.input;
        let (oh, ow) = self.output_size(x.h, x.w);
        assert_eq!((grad_out.h, grad_out.w, grad_out.c), (oh, ow, self.cout));
        let (k, s, p, cin, cout) = (self.kernel, self.stride, self.pad, self.cin, self.cout);
        let mut grad_in = Tensor4::zeros(x.n, x.h, x.w, cin);
        for (co, gb) in self.grad_bias.iter_mut().enumerate() {
            *gb += grad_out.data[co..].iter().step_by(cout).sum::<f64>();
        }
        for n in 0..x.n {
            for y in 0..x.h {
                for x_ in 0..x.w {
                    let in_base = ((n * x.h + y) * x.w + x_) * cin;
                    for ky in 0..k {
                        let oy = (y * s + ky).wrapping_sub(p);
                        if oy >= oh {
                            continue;
                        }
                        for kx in 0..k {
                            let ox = (x_ * s + kx).wrapping_sub(p);
                            if ox >= ow {
                                continue;
                            }
                            let g_base = ((n * oh + oy) * ow + ox) * cout;
                            let g = &grad_out.data[g_base..g_base + cout];
                            let w_base = ((ky * k + kx) * cin) * cout;
                            for ci in 0..cin {
                                let a = x.data[in_base + ci];
                                let row = w_base + ci * cout;
                                let mut dot = 0.0;
                                for (co, &gv) in g.iter().enumerate() {
                                    self.grad_weight[row + co] += a * gv;
                                    dot += self.weight[row + co] * gv;
                                }
                                grad_in.data[in_base + ci] += dot;
                            }
                        }
                    }
                }
            }
        }
        grad_in
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.iter_mut().for_each(|v| *v = 0.0);
        self.grad_bias.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_>) {
        f(
            format!("{prefix}/convt/weight"),
            &mut self.weight,
            &self.grad_weight,
        );
        f(
            format!("{prefix}/convt/bias"),
            &mut self.bias,
            &self.grad_bias,
        );
    }

    pub fn visit_state(&mut self, prefix: &str, f: &mut StateVisitor<'_>) {
        let (k, cin, cout) = (self.kernel, self.cin, self.cout);
        f(
            format!("{prefix}/convt/weight"),
            &[k, k, cin, cout],
            &mut self.weight,
        );
        f(format!("{prefix}/convt/bias"), &[cout], &mut self.bias);
    }
}

/// Seeded generator for parameter initialization.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform tensor in [lo, hi), for tests and probes.
pub fn random_tensor(
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    lo: f64,
    hi: f64,
    seed: u64,
) -> Tensor4 {
    let mut rng = seeded_rng(seed);
    let data = (0..n * h * w * c)
        .map(|_| rng.random_range(lo..hi))
        .collect();
    Tensor4::from_data(n, h, w, c, data)
}
