use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use super::conv::gaussian_init;
use super::{Mode, ParamVisitor, StateVisitor, Tensor4};

struct BnCache {
    xhat: Tensor4,
    inv_std: Vec<f64>,
}

/// Per-channel batch normalization over (N, H, W). Batch statistics use the
/// population variance; running statistics are updated with momentum during
/// training and used verbatim in eval mode.
pub struct BatchNorm2d {
    pub channels: usize,
    pub eps: f64,
    pub momentum: f64,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub grad_gamma: Vec<f64>,
    pub grad_beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    cache: Option<BnCache>,
}

impl core::fmt::Debug for BatchNorm2d {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "BatchNorm2d({})", self.channels)
    }
}

impl Clone for BatchNorm2d {
    fn clone(&self) -> Self {
        Self {
            channels: self.channels,
            eps: self.eps,
            momentum: self.momentum,
            gamma: self.gamma.clone(),
            beta: self.beta.clone(),
            grad_gamma: self.grad_gamma.clone(),
            grad_beta: self.grad_beta.clone(),
            running_mean: self.running_mean.clone(),
            running_var: self.running_var.clone(),
            cache: None,
        }
    }
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            eps: 1e-5,
            momentum: 0.1,
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            grad_gamma: vec![0.0; channels],
            grad_beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor4, mode: Mode) -> Tensor4 {
        assert_eq!(x.c, self.channels);
        let c = self.channels;
        let m = (x.n * x.h * x.w) as f64;
        let mut out = Tensor4::zeros(x.n, x.h, x.w, c);
        match mode {
            Mode::Train => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for (i, &v) in x.data.iter().enumerate() {
                    mean[i % c] += v;
                }
                for mu in mean.iter_mut() {
                    *mu /= m;
                }
                for (i, &v) in x.data.iter().enumerate() {
                    let d = v - mean[i % c];
                    var[i % c] += d * d;
                }
                for va in var.iter_mut() {
                    *va /= m;
                }
                let inv_std: Vec<f64> = var
                    .iter()
                    .map(|&v| 1.0 / libm::sqrt(v + self.eps))
                    .collect();
                let mut xhat = Tensor4::zeros(x.n, x.h, x.w, c);
                for (i, &v) in x.data.iter().enumerate() {
                    let ch = i % c;
                    let xh = (v - mean[ch]) * inv_std[ch];
                    xhat.data[i] = xh;
                    out.data[i] = self.gamma[ch] * xh + self.beta[ch];
                }
                for ch in 0..c {
                    self.running_mean[ch] =
                        (1.0 - self.momentum) * self.running_mean[ch] + self.momentum * mean[ch];
                    self.running_var[ch] =
                        (1.0 - self.momentum) * self.running_var[ch] + self.momentum * var[ch];
                }
                self.cache = Some(BnCache { xhat, inv_std });
            }
            Mode::Eval => {
                let inv_std: Vec<f64> = self
                    .running_var
                    .iter()
                    .map(|&v| 1.0 / libm::sqrt(v + self.eps))
                    .collect();
                for (i, &v) in x.data.iter().enumerate() {
                    let ch = i % c;
                    out.data[i] =
                        self.gamma[ch] * (v - self.running_mean[ch]) * inv_std[ch] + self.beta[ch];
                }
            }
        }
        out
    }

    pub fn backward(&mut self, grad_out: &Tensor4) -> Tensor4 {
        let cache = self.cache.take().expect("backward without train forward");
        let c = self.channels;
        let m = (grad_out.n * grad_out.h * grad_out.w) as f64;
        let mut sum_g = vec![0.0; c];
        let mut sum_gx = vec![0.0; c];
        for (i, &g) in grad_out.data.iter().enumerate() {
            let ch = i % c;
            sum_g[ch] += g;
            sum_gx[ch] += g * cache.xhat.data[i];
        }
        for ch in 0..c {
            self.grad_beta[ch] += sum_g[ch];
            self.grad_gamma[ch] += sum_gx[ch];
        }
        let mut grad_in = Tensor4::zeros(grad_out.n, grad_out.h, grad_out.w, c);
        for (i, &g) in grad_out.data.iter().enumerate() {
            let ch = i % c;
            grad_in.data[i] = self.gamma[ch] * cache.inv_std[ch] / m
                * (m * g - sum_g[ch] - cache.xhat.data[i] * sum_gx[ch]);
        }
        grad_in
    }

    pub fn zero_grad(&mut self) {
        self.grad_gamma.iter_mut().for_each(|v| *v = 0.0);
        self.grad_beta.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_>) {
        f(
            format!("{prefix}/bn/gamma"),
            &mut self.gamma,
            &self.grad_gamma,
        );
        f(format!("{prefix}/bn/beta"), &mut self.beta, &self.grad_beta);
    }

    pub fn visit_state(&mut self, prefix: &str, f: &mut StateVisitor<'_>) {
        let c = self.channels;
        f(format!("{prefix}/bn/gamma"), &[c], &mut self.gamma);
        f(format!("{prefix}/bn/beta"), &[c], &mut self.beta);
        f(
            format!("{prefix}/bn/running_mean"),
            &[c],
            &mut self.running_mean,
        );
        f(
            format!("{prefix}/bn/running_var"),
            &[c],
            &mut self.running_var,
        );
    }
}

/// Power-iteration state for spectral normalization of a weight viewed as a
/// (rows x cols) matrix; u has cols entries, v has rows entries.
#[derive(Clone, Debug)]
pub struct SpectralNorm {
    pub rows: usize,
    pub cols: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

fn normalize(v: &mut [f64]) {
    let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>()).max(1e-12);
    v.iter_mut().for_each(|x| *x /= n);
}

impl SpectralNorm {
    pub fn new(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut u = gaussian_init(cols, 1.0, rng);
        let mut v = gaussian_init(rows, 1.0, rng);
        normalize(&mut u);
        normalize(&mut v);
        Self { rows, cols, u, v }
    }

    /// One step: v <- W u / |W u|, u <- W^T v / |W^T v|.
    pub fn power_iterate(&mut self, weight: &[f64], iters: usize) {
        debug_assert_eq!(weight.len(), self.rows * self.cols);
        for _ in 0..iters {
            for (r, vr) in self.v.iter_mut().enumerate() {
                let row = &weight[r * self.cols..(r + 1) * self.cols];
                *vr = row.iter().zip(&self.u).map(|(w, u)| w * u).sum();
            }
            normalize(&mut self.v);
            for u in self.u.iter_mut() {
                *u = 0.0;
            }
            for r in 0..self.rows {
                let vr = self.v[r];
                let row = &weight[r * self.cols..(r + 1) * self.cols];
                for (u, w) in self.u.iter_mut().zip(row) {
                    *u += vr * w;
                }
            }
            normalize(&mut self.u);
        }
    }

    /// sigma = v^T W u with the current vectors.
    pub fn sigma(&self, weight: &[f64]) -> f64 {
        let mut s = 0.0;
        for r in 0..self.rows {
            let row = &weight[r * self.cols..(r + 1) * self.cols];
            let wu: f64 = row.iter().zip(&self.u).map(|(w, u)| w * u).sum();
            s += self.v[r] * wu;
        }
        s
    }
}

/// Largest singular value of a rows x cols matrix by power iteration from a
/// seeded start; independent of any layer state, used to verify normalized
/// weights.
pub fn estimate_spectral_norm(
    mat: &[f64],
    rows: usize,
    cols: usize,
    iters: usize,
    seed: u64,
) -> f64 {
    assert_eq!(mat.len(), rows * cols);
    let mut rng = super::conv::seeded_rng(seed);
    let mut sn = SpectralNorm::new(rows, cols, &mut rng);
    sn.power_iterate(mat, iters);
    sn.sigma(mat).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::conv::{random_tensor, seeded_rng};
    use crate::nn::Mode;

    #[test]
    fn bn_train_output_is_standardized() {
        let mut bn = BatchNorm2d::new(2);
        let x = random_tensor(2, 3, 3, 2, -2.0, 5.0, 7);
        let y = bn.forward(&x, Mode::Train);
        let m = (y.n * y.h * y.w) as f64;
        for ch in 0..2 {
            let vals: alloc::vec::Vec<f64> = y.data.iter().skip(ch).step_by(2).copied().collect();
            let mean: f64 = vals.iter().sum::<f64>() / m;
            let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4, "var={var}");
        }
    }

    #[test]
    fn bn_running_stats_updated_with_momentum() {
        let mut bn = BatchNorm2d::new(1);
        let x = crate::nn::Tensor4::from_data(1, 1, 4, 1, alloc::vec![1.0, 3.0, 5.0, 7.0]);
        bn.forward(&x, Mode::Train);
        // batch mean 4, population var 5
        assert!((bn.running_mean[0] - 0.4).abs() < 1e-12);
        assert!((bn.running_var[0] - (0.9 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn bn_eval_uses_running_stats() {
        let mut bn = BatchNorm2d::new(1);
        bn.running_mean[0] = 2.0;
        bn.running_var[0] = 4.0;
        let x = crate::nn::Tensor4::from_data(1, 1, 2, 1, alloc::vec![2.0, 4.0]);
        let y = bn.forward(&x, Mode::Eval);
        assert!(y.data[0].abs() < 1e-6);
        assert!((y.data[1] - 2.0 / libm::sqrt(4.0 + 1e-5)).abs() < 1e-9);
    }

    #[test]
    fn bn_gradients_match_finite_differences() {
        let mut bn = BatchNorm2d::new(2);
        bn.gamma = alloc::vec![1.3, 0.7];
        bn.beta = alloc::vec![0.1, -0.2];
        let x = random_tensor(2, 2, 2, 2, -1.0, 1.0, 31);
        let y = bn.forward(&x, Mode::Train);
        let gout = crate::nn::Tensor4 {
            data: y.data.iter().map(|v| 2.0 * v).collect(),
            ..y.clone()
        };
        let gin = bn.backward(&gout);
        let loss = |bn: &mut BatchNorm2d, xx: &crate::nn::Tensor4| -> f64 {
            // fresh forward in train mode without polluting running stats
            let mut b = bn.clone();
            let y = b.forward(xx, Mode::Train);
            y.data.iter().map(|v| v * v).sum()
        };
        let h = 1e-6;
        for idx in 0..x.data.len() {
            let mut x2 = x.clone();
            x2.data[idx] += h;
            let lp = loss(&mut bn, &x2);
            x2.data[idx] -= 2.0 * h;
            let lm = loss(&mut bn, &x2);
            let fd = (lp - lm) / (2.0 * h);
            let an = gin.data[idx];
            assert!(
                (fd - an).abs() <= 1e-4 * (1.0 + fd.abs()),
                "input grad mismatch at {idx}: fd={fd} an={an}"
            );
        }
        for ch in 0..2 {
            let orig = bn.gamma[ch];
            bn.gamma[ch] = orig + h;
            let lp = loss(&mut bn, &x);
            bn.gamma[ch] = orig - h;
            let lm = loss(&mut bn, &x);
            bn.gamma[ch] = orig;
            let fd = (lp - lm) / (2.0 * h);
            assert!((fd - bn.grad_gamma[ch]).abs() <= 1e-5 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn spectral_norm_estimate_matches_known_singular_value() {
        // diag(3, 1) has largest singular value 3
        let mat = alloc::vec![3.0, 0.0, 0.0, 1.0];
        let s = estimate_spectral_norm(&mat, 2, 2, 50, 1);
        assert!((s - 3.0).abs() < 1e-9, "s={s}");
    }

    #[test]
    fn power_iteration_converges_on_random_matrix() {
        let mut rng = seeded_rng(77);
        let mat = gaussian_init(40 * 8, 1.0, &mut rng);
        let a = estimate_spectral_norm(&mat, 40, 8, 100, 2);
        let b = estimate_spectral_norm(&mat, 40, 8, 100, 3);
        assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
    }
}
