//! Adaptive moment estimation with per-network instances, set up so the
//! generators and discriminators run on independent learning rates (the
//! two-time-scale update rule).

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::nn::StateEntry;

#[derive(Debug, Clone, PartialEq)]
pub enum OptimError {
    /// Learning rates must be strictly positive.
    NonPositiveLr(f64),
}

impl core::fmt::Display for OptimError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            OptimError::NonPositiveLr(lr) => write!(f, "learning rate {lr} is not positive"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for OptimError {}

/// Adam over named parameter arrays. Moments are keyed by parameter name
/// and materialize lazily on first update; `t` counts completed steps for
/// bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(lr: f64) -> Result<Self, OptimError> {
        if lr <= 0.0 || lr.is_nan() {
            return Err(OptimError::NonPositiveLr(lr));
        }
        Ok(Self {
            lr,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            moments: BTreeMap::new(),
        })
    }

    /// Marks the start of one optimizer step covering all parameters the
    /// caller is about to update.
    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    /// Applies one Adam update to a named array using its accumulated
    /// gradient. Must be preceded by [`Adam::begin_step`] this step.
    pub fn update(&mut self, name: &str, value: &mut [f64], grad: &[f64]) {
        debug_assert!(self.t > 0, "update before begin_step");
        debug_assert_eq!(value.len(), grad.len());
        let (m, v) = self
            .moments
            .entry(String::from(name))
            .or_insert_with(|| (vec![0.0; value.len()], vec![0.0; value.len()]));
        debug_assert_eq!(m.len(), value.len(), "parameter {name} changed size");
        let bc1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for i in 0..value.len() {
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * grad[i];
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            value[i] -= self.lr * mhat / (libm::sqrt(vhat) + self.eps);
        }
    }

    /// Dumps first and second moments as named arrays, prefixed.
    pub fn export_state(&self, prefix: &str) -> Vec<StateEntry> {
        let mut out = Vec::new();
        for (name, (m, v)) in &self.moments {
            out.push(StateEntry {
                name: alloc::format!("{prefix}/{name}/m"),
                shape: vec![m.len()],
                data: m.clone(),
            });
            out.push(StateEntry {
                name: alloc::format!("{prefix}/{name}/v"),
                shape: vec![v.len()],
                data: v.clone(),
            });
        }
        out
    }

    /// Restores moments dumped by [`Adam::export_state`] with the same
    /// prefix. Entries with other prefixes are ignored.
    pub fn import_state(&mut self, prefix: &str, entries: &[StateEntry]) {
        self.moments.clear();
        let pre = alloc::format!("{prefix}/");
        for e in entries {
            let Some(rest) = e.name.strip_prefix(pre.as_str()) else {
                continue;
            };
            let (param, kind) = match rest.rsplit_once('/') {
                Some(x) => x,
                None => continue,
            };
            let slot = self
                .moments
                .entry(String::from(param))
                .or_insert_with(|| (Vec::new(), Vec::new()));
            match kind {
                "m" => slot.0 = e.data.clone(),
                "v" => slot.1 = e.data.clone(),
                _ => {}
            }
        }
    }
}

/// One optimizer per network. Generators share `lr_generators`,
/// discriminators share `lr_discriminators`.
#[derive(Debug, Clone)]
pub struct OptimizerSet {
    pub g1: Adam,
    pub g2: Adam,
    pub d1: Adam,
    pub d2: Adam,
    /// False when both rates coincide, i.e. the two-time-scale rule is
    /// effectively disabled; callers should surface a warning.
    pub ttur_active: bool,
}

pub fn make_optimizers(
    lr_generators: f64,
    lr_discriminators: f64,
) -> Result<OptimizerSet, OptimError> {
    Ok(OptimizerSet {
        g1: Adam::new(lr_generators)?,
        g2: Adam::new(lr_generators)?,
        d1: Adam::new(lr_discriminators)?,
        d2: Adam::new(lr_discriminators)?,
        ttur_active: lr_generators != lr_discriminators,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_signed_lr_after_bias_correction() {
        let mut opt = Adam::new(0.01).unwrap();
        let mut x = vec![0.0];
        opt.begin_step();
        opt.update("x", &mut x, &[6.0]);
        // mhat = g, vhat = g^2, so the step is lr * g / (|g| + eps)
        assert!((x[0] + 0.01).abs() < 1e-8, "x={}", x[0]);
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut opt = Adam::new(0.1).unwrap();
        let mut x = vec![5.0];
        for _ in 0..300 {
            let g = 2.0 * (x[0] - 3.0);
            opt.begin_step();
            opt.update("x", &mut x, &[g]);
        }
        assert!((x[0] - 3.0).abs() < 1e-3, "x={}", x[0]);
    }

    #[test]
    fn parameters_keep_independent_moments() {
        let mut opt = Adam::new(0.5).unwrap();
        let mut a = vec![0.0];
        let mut b = vec![0.0];
        opt.begin_step();
        opt.update("a", &mut a, &[1.0]);
        opt.update("b", &mut b, &[-1.0]);
        assert!(a[0] < 0.0 && b[0] > 0.0);
        assert!((a[0] + b[0]).abs() < 1e-12);
    }

    #[test]
    fn make_optimizers_applies_ttur_rates() {
        let set = make_optimizers(5e-5, 1e-4).unwrap();
        assert_eq!(set.g1.lr, 5e-5);
        assert_eq!(set.g2.lr, 5e-5);
        assert_eq!(set.d1.lr, 1e-4);
        assert_eq!(set.d2.lr, 1e-4);
        assert!(set.ttur_active);
        let equal = make_optimizers(1e-4, 1e-4).unwrap();
        assert!(!equal.ttur_active);
        assert!(matches!(
            make_optimizers(-1.0, 1e-4),
            Err(OptimError::NonPositiveLr(_))
        ));
        assert!(matches!(
            make_optimizers(5e-5, 0.0),
            Err(OptimError::NonPositiveLr(_))
        ));
    }

    #[test]
    fn moment_state_roundtrips_exactly() {
        let mut a = Adam::new(0.01).unwrap();
        let mut x = vec![1.0, 2.0];
        for _ in 0..3 {
            a.begin_step();
            let g: Vec<f64> = x.iter().map(|v| v * 0.5).collect();
            a.update("w", &mut x, &g);
        }
        let dump = a.export_state("opt/g1");
        let mut b = Adam::new(0.01).unwrap();
        b.t = a.t;
        b.import_state("opt/g1", &dump);
        let mut xa = x.clone();
        let mut xb = x.clone();
        a.begin_step();
        b.begin_step();
        a.update("w", &mut xa, &[0.3, -0.2]);
        b.update("w", &mut xb, &[0.3, -0.2]);
        assert_eq!(xa, xb);
    }
}
