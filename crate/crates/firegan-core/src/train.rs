//! Adversarial training: one combined step updates G1 and G2 every call
//! and both discriminators on the configured schedule, with independent
//! generator/discriminator learning rates.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::image::ValueDomain;
use crate::losses::{
    d1_loss, d1_loss_grads, d2_loss, d2_loss_grads, g1_loss_grads, g2_loss_grads, LossError,
    LossReport, LossWeights,
};
use crate::model::{ModelError, Network, NetworkKind, NetworkSpec};
use crate::nn::{Mode, StateEntry, Tensor4};
use crate::optim::{make_optimizers, Adam, OptimError, OptimizerSet};
use crate::ImagePair;

/// Specs of all four networks in one bundle, as persisted in checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpecs {
    pub g1: NetworkSpec,
    pub g2: NetworkSpec,
    pub d1: NetworkSpec,
    pub d2: NetworkSpec,
}

impl Default for NetworkSpecs {
    fn default() -> Self {
        Self {
            g1: NetworkSpec::g1_unet(),
            g2: NetworkSpec::g2(),
            d1: NetworkSpec::discriminator(),
            d2: NetworkSpec::discriminator(),
        }
    }
}

impl NetworkSpecs {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.g1.is_g1() {
            return Err(ModelError::BadSpec("g1 slot must hold a g1 variant"));
        }
        if self.g2.kind != NetworkKind::G2 {
            return Err(ModelError::BadSpec("g2 slot must hold a g2 spec"));
        }
        for d in [&self.d1, &self.d2] {
            if d.kind != NetworkKind::Discriminator {
                return Err(ModelError::BadSpec("d slots must hold discriminator specs"));
            }
        }
        self.g1.validate()?;
        self.g2.validate()?;
        self.d1.validate()?;
        self.d2.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_generators: f64,
    pub lr_discriminators: f64,
    /// Generator steps per discriminator update.
    pub d_update_period: u64,
    pub weights: LossWeights,
    pub seed: u64,
    /// Checkpoint cadence in steps; a final checkpoint is always written.
    pub checkpoint_every: u64,
    pub resume_from: Option<String>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            epochs: 40,
            lr_generators: 5e-5,
            lr_discriminators: 1e-4,
            d_update_period: 2,
            weights: LossWeights::default(),
            seed: 0,
            checkpoint_every: 1000,
            resume_from: None,
        }
    }
}

impl TrainingConfig {
    /// Fire-domain transfer defaults: 3 epochs with the strengthened
    /// visible-adversarial weight, everything else as in pretraining.
    pub fn transfer_defaults() -> Self {
        Self {
            epochs: 3,
            weights: LossWeights {
                gamma: 4.5,
                ..LossWeights::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size < 1 {
            return Err(TrainError::BadConfig("batch_size must be at least 1"));
        }
        let bad_lr = |lr: f64| lr <= 0.0 || lr.is_nan();
        if bad_lr(self.lr_generators) || bad_lr(self.lr_discriminators) {
            return Err(TrainError::Optim(OptimError::NonPositiveLr(
                self.lr_generators.min(self.lr_discriminators),
            )));
        }
        if self.d_update_period < 1 {
            return Err(TrainError::BadConfig("d_update_period must be at least 1"));
        }
        self.weights.validate().map_err(TrainError::Loss)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    BadConfig(&'static str),
    Model(ModelError),
    Loss(LossError),
    Optim(OptimError),
    BadBatch {
        expected: usize,
        got: usize,
    },
    /// Batch images must be in the model domain with 3-channel infrared.
    BadBatchImage(String),
    /// A loss term left the finite range; names the term.
    NonFiniteLoss(&'static str),
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainError::BadConfig(msg) => write!(f, "invalid training config: {msg}"),
            TrainError::Model(e) => write!(f, "{e}"),
            TrainError::Loss(e) => write!(f, "{e}"),
            TrainError::Optim(e) => write!(f, "{e}"),
            TrainError::BadBatch { expected, got } => {
                write!(f, "batch of {got} pairs, expected {expected}")
            }
            TrainError::BadBatchImage(id) => {
                write!(f, "pair {id} is not model-domain 3-channel")
            }
            TrainError::NonFiniteLoss(term) => {
                write!(f, "training aborted: {term} became non-finite")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TrainError {}

impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        TrainError::Model(e)
    }
}

impl From<LossError> for TrainError {
    fn from(e: LossError) -> Self {
        match e {
            LossError::NonFinite(term) => TrainError::NonFiniteLoss(term),
            other => TrainError::Loss(other),
        }
    }
}

impl From<OptimError> for TrainError {
    fn from(e: OptimError) -> Self {
        TrainError::Optim(e)
    }
}

/// Everything a training run owns: the four networks, their optimizers,
/// and the counters that drive scheduling and deterministic resume.
pub struct TrainState {
    pub step: u64,
    pub epoch: u64,
    pub d_updates: u64,
    pub seed: u64,
    pub specs: NetworkSpecs,
    pub g1: Network,
    pub g2: Network,
    pub d1: Network,
    pub d2: Network,
    pub opts: OptimizerSet,
}

impl TrainState {
    /// Builds fresh networks and optimizers. Each network draws its
    /// initialization from an offset of the run seed.
    pub fn new(specs: NetworkSpecs, cfg: &TrainingConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        specs.validate()?;
        let seed = cfg.seed;
        Ok(Self {
            step: 0,
            epoch: 0,
            d_updates: 0,
            seed,
            specs,
            g1: Network::build(specs.g1, seed)?,
            g2: Network::build(specs.g2, seed.wrapping_add(1))?,
            d1: Network::build(specs.d1, seed.wrapping_add(2))?,
            d2: Network::build(specs.d2, seed.wrapping_add(3))?,
            opts: make_optimizers(cfg.lr_generators, cfg.lr_discriminators)?,
        })
    }

    /// All persistent arrays: network state plus optimizer moments, with
    /// `net/` and `opt/` prefixes.
    pub fn export_state(&mut self) -> Vec<StateEntry> {
        let mut out = Vec::new();
        for (name, net) in self.networks_mut() {
            net.visit_state(&mut |pname, shape, data| {
                out.push(StateEntry {
                    name: alloc::format!("net/{name}/{pname}"),
                    shape: shape.to_vec(),
                    data: data.clone(),
                });
            });
        }
        out.extend(self.opts.g1.export_state("opt/g1"));
        out.extend(self.opts.g2.export_state("opt/g2"));
        out.extend(self.opts.d1.export_state("opt/d1"));
        out.extend(self.opts.d2.export_state("opt/d2"));
        out
    }

    /// Restores an [`TrainState::export_state`] dump. Network entries are
    /// strictly validated; optimizer moments are taken as given.
    pub fn import_state(&mut self, entries: &[StateEntry]) -> Result<(), ModelError> {
        for (name, net) in self.networks_mut() {
            let prefix = alloc::format!("net/{name}/");
            let subset: Vec<StateEntry> = entries
                .iter()
                .filter_map(|e| {
                    e.name.strip_prefix(prefix.as_str()).map(|rest| StateEntry {
                        name: String::from(rest),
                        shape: e.shape.clone(),
                        data: e.data.clone(),
                    })
                })
                .collect();
            net.import_state(&subset)?;
        }
        self.opts.g1.import_state("opt/g1", entries);
        self.opts.g2.import_state("opt/g2", entries);
        self.opts.d1.import_state("opt/d1", entries);
        self.opts.d2.import_state("opt/d2", entries);
        Ok(())
    }

    fn networks_mut(&mut self) -> [(&'static str, &mut Network); 4] {
        [
            ("g1", &mut self.g1),
            ("g2", &mut self.g2),
            ("d1", &mut self.d1),
            ("d2", &mut self.d2),
        ]
    }

    /// Adam step counters (g1, g2, d1, d2), persisted alongside the arrays
    /// so bias correction resumes exactly.
    pub fn adam_steps(&self) -> [u64; 4] {
        [
            self.opts.g1.t,
            self.opts.g2.t,
            self.opts.d1.t,
            self.opts.d2.t,
        ]
    }

    pub fn set_adam_steps(&mut self, t: [u64; 4]) {
        self.opts.g1.t = t[0];
        self.opts.g2.t = t[1];
        self.opts.d1.t = t[2];
        self.opts.d2.t = t[3];
    }
}

fn stack_batch(
    batch: &[ImagePair],
    cfg: &TrainingConfig,
) -> Result<(Tensor4, Tensor4), TrainError> {
    if batch.len() != cfg.batch_size {
        return Err(TrainError::BadBatch {
            expected: cfg.batch_size,
            got: batch.len(),
        });
    }
    for pair in batch {
        let ok = pair.visible.domain() == ValueDomain::ModelSigned
            && pair.infrared.domain() == ValueDomain::ModelSigned
            && pair.infrared.channels() == 3;
        if !ok {
            return Err(TrainError::BadBatchImage(pair.id.clone()));
        }
    }
    let vis: Vec<&crate::ImageTensor> = batch.iter().map(|p| &p.visible).collect();
    let ir: Vec<&crate::ImageTensor> = batch.iter().map(|p| &p.infrared).collect();
    let v = Tensor4::stack(&vis).map_err(|_| TrainError::BadBatchImage(batch[0].id.clone()))?;
    let r = Tensor4::stack(&ir).map_err(|_| TrainError::BadBatchImage(batch[0].id.clone()))?;
    Ok((v, r))
}

fn apply_adam(opt: &mut Adam, net: &mut Network) {
    opt.begin_step();
    // visit_params borrows the optimizer inside the closure
    let mut updates: Vec<(String, *mut Vec<f64>, Vec<f64>)> = Vec::new();
    net.visit_params(&mut |name, value, grad| {
        updates.push((name, value as *mut Vec<f64>, grad.clone()));
    });
    for (name, value, grad) in updates {
        // safe: visit_params yields disjoint arrays owned by `net`, which
        // outlives this loop and is not otherwise touched here
        let value = unsafe { &mut *value };
        opt.update(&name, value, &grad);
    }
}

/// One training step over one batch: updates both generators, computes all
/// loss terms, and updates the discriminators when the schedule says so
/// (steps where `step % d_update_period == 0`).
pub fn train_step(
    state: &mut TrainState,
    batch: &[ImagePair],
    cfg: &TrainingConfig,
) -> Result<LossReport, TrainError> {
    cfg.validate()?;
    let w = &cfg.weights;
    let (visible, real_ir) = stack_batch(batch, cfg)?;
    let n = visible.n;

    // G1: synthesize infrared, score it with D2, update G1 only.
    let gen_ir = state.g1.forward(&visible, Mode::Train)?;
    let gen_scores = state.d2.forward(&gen_ir, Mode::Train)?;
    let (g1_total, g1_grads) = g1_loss_grads(&gen_scores, &gen_ir, &real_ir, w)?;
    let through_d2 = state.d2.backward(&g1_grads.d_scores);
    let mut gen_ir_grad = through_d2;
    gen_ir_grad.add_assign(&g1_grads.d_gen_ir);
    state.g1.zero_grad();
    state.g1.backward(&gen_ir_grad);
    apply_adam(&mut state.opts.g1, &mut state.g1);

    // G2: fuse the visible image with the synthetic infrared (treated as
    // a constant input here), score with both discriminators, update G2.
    let fusion_input = visible.concat_channels(&gen_ir);
    let fused = state.g2.forward(&fusion_input, Mode::Train)?;
    let fused_d1 = state.d1.forward(&fused, Mode::Train)?;
    let fused_d2 = state.d2.forward(&fused, Mode::Train)?;
    let (g2l, g2_grads) = g2_loss_grads(&fused_d1, &fused_d2, &fused, &real_ir, &visible, w)?;
    let mut fused_grad = state.d1.backward(&g2_grads.d_scores_d1);
    fused_grad.add_assign(&state.d2.backward(&g2_grads.d_scores_d2));
    fused_grad.add_assign(&g2_grads.d_fused);
    state.g2.zero_grad();
    state.g2.backward(&fused_grad);
    apply_adam(&mut state.opts.g2, &mut state.g2);

    // Discriminators: real and fake classes ride one batched forward so
    // each network backpropagates a single cache. Parameters move only on
    // scheduled steps; off-schedule steps still report the loss values.
    let update_d = state.step.is_multiple_of(cfg.d_update_period);
    let d_mode = if update_d { Mode::Train } else { Mode::Eval };

    let d1_in = visible.concat_batch(&fused);
    let d1_scores = state.d1.forward(&d1_in, d_mode)?;
    let (d1_real, d1_fake) = d1_scores.split_batch(n);
    let d1_total = if update_d {
        let (total, grads) = d1_loss_grads(&d1_real, &d1_fake, w)?;
        state.d1.zero_grad();
        state
            .d1
            .backward(&grads.d_real.concat_batch(&grads.d_fused));
        apply_adam(&mut state.opts.d1, &mut state.d1);
        total
    } else {
        d1_loss(&d1_real, &d1_fake, w)?
    };

    let d2_in = real_ir.concat_batch(&gen_ir).concat_batch(&fused);
    let d2_scores = state.d2.forward(&d2_in, d_mode)?;
    let (d2_real, d2_fakes) = d2_scores.split_batch(n);
    let (d2_gen, d2_fused) = d2_fakes.split_batch(n);
    let d2_total = if update_d {
        let (total, grads) = d2_loss_grads(&d2_real, &d2_gen, &d2_fused, w)?;
        state.d2.zero_grad();
        state.d2.backward(
            &grads
                .d_real
                .concat_batch(&grads.d_gen_ir)
                .concat_batch(&grads.d_fused),
        );
        apply_adam(&mut state.opts.d2, &mut state.d2);
        total
    } else {
        d2_loss(&d2_real, &d2_gen, &d2_fused, w)?
    };
    if update_d {
        state.d_updates += 1;
    }

    let report = LossReport {
        g1_total,
        g2_total: g2l.total,
        g2_adv_d1: g2l.adv_d1,
        g2_adv_d2: g2l.adv_d2,
        g2_content: g2l.content,
        d1_total,
        d2_total,
    };
    if let Some(term) = report.first_non_finite() {
        return Err(TrainError::NonFiniteLoss(term));
    }
    state.step += 1;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageTensor;
    use crate::nn::random_tensor;
    use alloc::format;
    use alloc::vec::Vec;

    fn tiny_specs() -> NetworkSpecs {
        NetworkSpecs {
            g1: NetworkSpec {
                kind: NetworkKind::G1Unet,
                depth: 2,
                base_filters: 2,
                kernel_size: 4,
                use_spectral_norm: false,
                output_channels: 3,
            },
            g2: NetworkSpec {
                depth: 3,
                base_filters: 4,
                kernel_size: 3,
                ..NetworkSpec::g2()
            },
            d1: NetworkSpec {
                depth: 2,
                base_filters: 2,
                kernel_size: 3,
                ..NetworkSpec::discriminator()
            },
            d2: NetworkSpec {
                depth: 2,
                base_filters: 2,
                kernel_size: 3,
                ..NetworkSpec::discriminator()
            },
        }
    }

    fn tiny_cfg() -> TrainingConfig {
        TrainingConfig {
            batch_size: 2,
            lr_generators: 1e-3,
            lr_discriminators: 2e-3,
            ..TrainingConfig::default()
        }
    }

    fn tiny_batch(seed: u64, n: usize) -> Vec<ImagePair> {
        (0..n)
            .map(|i| {
                let v = random_tensor(1, 8, 8, 3, -0.9, 0.9, seed + 2 * i as u64)
                    .to_image(0, crate::ValueDomain::ModelSigned)
                    .unwrap();
                let r = random_tensor(1, 8, 8, 3, -0.9, 0.9, seed + 2 * i as u64 + 1)
                    .to_image(0, crate::ValueDomain::ModelSigned)
                    .unwrap();
                ImagePair::new(v, r, format!("t{i}")).unwrap()
            })
            .collect()
    }

    #[test]
    fn default_config_matches_training_protocol() {
        let cfg = TrainingConfig::default();
        assert_eq!(cfg.batch_size, 4);
        assert_eq!(cfg.epochs, 40);
        assert_eq!(cfg.lr_generators, 5e-5);
        assert_eq!(cfg.lr_discriminators, 1e-4);
        assert_eq!(cfg.d_update_period, 2);
        assert_eq!(cfg.weights.gamma, 1.0);
    }

    #[test]
    fn transfer_defaults_adjust_epochs_and_gamma_only() {
        let cfg = TrainingConfig::transfer_defaults();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.weights.gamma, 4.5);
        assert_eq!(cfg.batch_size, 4);
        assert_eq!(cfg.lr_generators, 5e-5);
        assert_eq!(cfg.lr_discriminators, 1e-4);
        assert_eq!(cfg.d_update_period, 2);
    }

    #[test]
    fn discriminators_follow_the_update_schedule() {
        let cfg = tiny_cfg();
        let mut state = TrainState::new(tiny_specs(), &cfg).unwrap();
        let batch = tiny_batch(1, 2);
        for _ in 0..4 {
            train_step(&mut state, &batch, &cfg).unwrap();
        }
        // period 2 over steps 0..3 updates at 0 and 2
        assert_eq!(state.d_updates, 2);
        assert_eq!(state.opts.d1.t, 2);
        assert_eq!(state.opts.g1.t, 4);

        let cfg1 = TrainingConfig {
            d_update_period: 1,
            ..cfg
        };
        let mut state = TrainState::new(tiny_specs(), &cfg1).unwrap();
        for _ in 0..3 {
            train_step(&mut state, &batch, &cfg1).unwrap();
        }
        assert_eq!(state.d_updates, 3);
    }

    /// Learnable arrays only; power-iteration state advances every
    /// forward pass by design and is excluded.
    fn params_of(net: &mut Network) -> Vec<(String, Vec<f64>)> {
        let mut out = Vec::new();
        net.visit_params(&mut |name, value, _| out.push((name, value.clone())));
        out
    }

    #[test]
    fn generators_move_every_step_discriminators_only_on_schedule() {
        let cfg = tiny_cfg();
        let mut state = TrainState::new(tiny_specs(), &cfg).unwrap();
        let batch = tiny_batch(5, 2);
        train_step(&mut state, &batch, &cfg).unwrap(); // step 0: d updated
        let d1_after_0 = params_of(&mut state.d1);
        train_step(&mut state, &batch, &cfg).unwrap(); // step 1: d frozen
        let d1_after_1 = params_of(&mut state.d1);
        assert_eq!(
            d1_after_0, d1_after_1,
            "discriminator moved on an off-schedule step"
        );

        let g1_after_1 = params_of(&mut state.g1);
        train_step(&mut state, &batch, &cfg).unwrap();
        let g1_after_2 = params_of(&mut state.g1);
        assert_ne!(g1_after_1, g1_after_2, "generator failed to move");
    }

    #[test]
    fn training_is_deterministic_for_a_fixed_seed() {
        let cfg = tiny_cfg();
        let batch = tiny_batch(9, 2);
        let mut a = TrainState::new(tiny_specs(), &cfg).unwrap();
        let mut b = TrainState::new(tiny_specs(), &cfg).unwrap();
        for _ in 0..3 {
            let ra = train_step(&mut a, &batch, &cfg).unwrap();
            let rb = train_step(&mut b, &batch, &cfg).unwrap();
            assert_eq!(ra, rb);
        }
        let sa = a.export_state();
        let sb = b.export_state();
        for (x, y) in sa.iter().zip(&sb) {
            assert_eq!(x.name, y.name);
            assert_eq!(x.data, y.data, "divergence in {}", x.name);
        }
    }

    #[test]
    fn state_roundtrip_resumes_bit_exactly() {
        let cfg = tiny_cfg();
        let batch = tiny_batch(13, 2);
        let mut a = TrainState::new(tiny_specs(), &cfg).unwrap();
        for _ in 0..2 {
            train_step(&mut a, &batch, &cfg).unwrap();
        }
        let dump = a.export_state();
        let adam_t = a.adam_steps();
        let (step, epoch, d_updates) = (a.step, a.epoch, a.d_updates);

        let mut b = TrainState::new(tiny_specs(), &cfg).unwrap();
        b.import_state(&dump).unwrap();
        b.set_adam_steps(adam_t);
        b.step = step;
        b.epoch = epoch;
        b.d_updates = d_updates;

        let ra = train_step(&mut a, &batch, &cfg).unwrap();
        let rb = train_step(&mut b, &batch, &cfg).unwrap();
        assert_eq!(ra, rb);
        let sa = a.export_state();
        let sb = b.export_state();
        for (x, y) in sa.iter().zip(&sb) {
            assert_eq!(x.data, y.data, "divergence in {}", x.name);
        }
    }

    #[test]
    fn non_finite_parameters_abort_with_a_named_term() {
        let cfg = tiny_cfg();
        let mut state = TrainState::new(tiny_specs(), &cfg).unwrap();
        // poison one G1 weight so the synthetic infrared goes NaN
        state.g1.visit_params(&mut |name, value, _| {
            if name.starts_with("enc0") && !value.is_empty() {
                value[0] = f64::NAN;
            }
        });
        let err = train_step(&mut state, &tiny_batch(21, 2), &cfg).unwrap_err();
        assert!(matches!(err, TrainError::NonFiniteLoss(_)), "got {err:?}");
    }

    #[test]
    fn wrong_batch_size_and_domain_are_rejected() {
        let cfg = tiny_cfg();
        let mut state = TrainState::new(tiny_specs(), &cfg).unwrap();
        let short = tiny_batch(1, 1);
        assert!(matches!(
            train_step(&mut state, &short, &cfg),
            Err(TrainError::BadBatch {
                expected: 2,
                got: 1
            })
        ));
        let v = ImageTensor::filled(8, 8, 3, crate::ValueDomain::FileU8, 10.0).unwrap();
        let r = ImageTensor::filled(8, 8, 3, crate::ValueDomain::FileU8, 10.0).unwrap();
        let file_pair = ImagePair::new(v, r, "f".into()).unwrap();
        assert!(matches!(
            train_step(&mut state, &[file_pair.clone(), file_pair], &cfg),
            Err(TrainError::BadBatchImage(_))
        ));
    }

    #[test]
    fn ttur_rates_differ_under_defaults() {
        let cfg = TrainingConfig::default();
        let state = TrainState::new(tiny_specs(), &cfg).unwrap();
        assert!(state.opts.ttur_active);
        assert_ne!(state.opts.g1.lr, state.opts.d1.lr);
    }
}
