//! The training loop around `firegan_core::train`: deterministic batch
//! ordering, lazily materialized augmentation, per-step loss logging,
//! per-epoch validation metrics, and checkpoint cadence.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use firegan_core::augment::{augment, plan_augmentation, AugmentError, AugmentOp};
use firegan_core::image::ImageError;
use firegan_core::metrics::{aggregate, evaluate_triple, MetricError};
use firegan_core::model::{fuse, generate_ir, ModelError};
use firegan_core::nn::seeded_rng;
use firegan_core::optim::make_optimizers;
use firegan_core::train::{train_step, NetworkSpecs, TrainError, TrainState, TrainingConfig};
use firegan_core::{ImagePair, MetricParams, MetricRecord};
use rand::seq::SliceRandom;

use crate::checkpoint::{self, CheckpointError};

pub const LOSS_COLUMNS: [&str; 8] = [
    "step",
    "g1_total",
    "g2_total",
    "g2_adv_d1",
    "g2_adv_d2",
    "g2_content",
    "d1_total",
    "d2_total",
];

#[derive(Debug, thiserror::Error)]
pub enum TrainerError {
    #[error("{0}")]
    Train(#[from] TrainError),
    #[error("{0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("{0}")]
    Augment(#[from] AugmentError),
    #[error("{0}")]
    Image(#[from] ImageError),
    #[error("{0}")]
    Metric(#[from] MetricError),
    #[error("{0}")]
    Model(#[from] ModelError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("training set of {got} pairs cannot fill one batch of {batch}")]
    TrainSetTooSmall { got: usize, batch: usize },
    #[error("validation item {0} reached a gradient batch")]
    ValLeakage(String),
    #[error("checkpoint was trained with different network specs")]
    SpecMismatch,
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> TrainerError {
    let context = context.into();
    move |source| TrainerError::Io { context, source }
}

/// Provenance tag carried by every batch item; the loop rejects anything
/// not tagged as training data, so validation images can never reach a
/// gradient step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lineage {
    Train,
    Val,
}

#[derive(Debug, Clone)]
pub struct TaggedPair {
    pub pair: ImagePair,
    pub lineage: Lineage,
}

/// A deterministic, indexable source of model-domain training pairs.
pub trait TrainData {
    fn len(&self) -> usize;
    fn get(&self, i: usize) -> Result<TaggedPair, TrainerError>;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Pre-materialized pairs, converted to the model domain up front.
pub struct InMemory {
    items: Vec<ImagePair>,
    lineage: Lineage,
}

impl InMemory {
    pub fn new(pairs: &[ImagePair], lineage: Lineage) -> Result<Self, TrainerError> {
        let items = pairs
            .iter()
            .map(to_model_pair)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { items, lineage })
    }
}

impl TrainData for InMemory {
    fn len(&self) -> usize {
        self.items.len()
    }
    fn get(&self, i: usize) -> Result<TaggedPair, TrainerError> {
        Ok(TaggedPair {
            pair: self.items[i].clone(),
            lineage: self.lineage,
        })
    }
}

fn to_model_pair(pair: &ImagePair) -> Result<ImagePair, TrainerError> {
    use firegan_core::image::ValueDomain;
    if pair.visible.domain() == ValueDomain::ModelSigned {
        return Ok(pair.clone());
    }
    Ok(ImagePair::new(
        pair.visible.to_model_domain()?,
        pair.infrared.to_model_domain()?,
        pair.id.clone(),
    )?)
}

const ITEM_SEED_MIX: u64 = 0x9E37_79B9_7F4A_7C15;
const EPOCH_SEED_MIX: u64 = 0xD1B5_4A32_D192_ED03;

/// A training pool expanded to `target` items by an augmentation plan.
/// Items materialize on demand: `get(i)` depends only on `(seed, i)`, so
/// any access order (including parallel prefetch) yields the same data.
pub struct AugmentedCorpus {
    pool: Vec<ImagePair>,
    items: Vec<(usize, AugmentOp)>,
    seed: u64,
}

impl AugmentedCorpus {
    pub fn build(pool: Vec<ImagePair>, target: usize, seed: u64) -> Self {
        let items = plan_augmentation(pool.len(), target)
            .into_iter()
            .enumerate()
            .flat_map(|(j, plan)| plan.into_iter().map(move |op| (j, op)))
            .collect();
        Self { pool, items, seed }
    }
}

impl TrainData for AugmentedCorpus {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn get(&self, i: usize) -> Result<TaggedPair, TrainerError> {
        let (j, op) = self.items[i];
        let item_seed = self.seed ^ (i as u64).wrapping_mul(ITEM_SEED_MIX);
        let mut out = augment(&self.pool[j], &[op], item_seed)?;
        let mut pair = out.pop().expect("one op yields one pair");
        if !matches!(op, AugmentOp::Identity) {
            pair.id = format!("{}#i{i}", self.pool[j].id);
        }
        Ok(TaggedPair {
            pair: to_model_pair(&pair)?,
            lineage: Lineage::Train,
        })
    }
}

/// Index order for one epoch: a seeded shuffle, independent of any other
/// epoch, so a resumed run replays the identical batch sequence.
pub fn epoch_order(len: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    let mut rng = seeded_rng(seed ^ (epoch + 1).wrapping_mul(EPOCH_SEED_MIX));
    idx.shuffle(&mut rng);
    idx
}

pub struct FitOutputs {
    pub state: TrainState,
    pub final_checkpoint: PathBuf,
    pub losses_csv: PathBuf,
    pub val_metrics_csv: PathBuf,
}

/// Trains fresh networks (or resumes from `cfg.resume_from`) for
/// `cfg.epochs` passes over `train`, dropping any partial final batch.
/// `step_cap` limits the run to that many additional steps (dry runs).
pub fn fit(
    train: &dyn TrainData,
    val: &[ImagePair],
    specs: NetworkSpecs,
    cfg: &TrainingConfig,
    metric_params: &MetricParams,
    out_dir: &Path,
    step_cap: Option<u64>,
) -> Result<FitOutputs, TrainerError> {
    let (state, resumed) = match &cfg.resume_from {
        Some(path) => {
            let (state, _) = checkpoint::load(Path::new(path))?;
            if state.specs != specs {
                return Err(TrainerError::SpecMismatch);
            }
            log::info!("resumed from {} at step {}", path, state.step);
            (state, true)
        }
        None => (TrainState::new(specs, cfg)?, false),
    };
    run_loop(
        state,
        train,
        val,
        cfg,
        metric_params,
        out_dir,
        step_cap,
        resumed,
    )
}

/// The fine-tuning phase: same loop as [`fit`], but starting from already
/// trained parameters with fresh optimizers and counters. Pass
/// [`TrainingConfig::transfer_defaults`] (3 epochs, gamma 4.5) unless
/// overriding.
pub fn transfer_learn(
    mut state: TrainState,
    train: &dyn TrainData,
    val: &[ImagePair],
    cfg: &TrainingConfig,
    metric_params: &MetricParams,
    out_dir: &Path,
    step_cap: Option<u64>,
) -> Result<FitOutputs, TrainerError> {
    cfg.validate().map_err(TrainerError::Train)?;
    state.step = 0;
    state.epoch = 0;
    state.d_updates = 0;
    state.seed = cfg.seed;
    state.opts = make_optimizers(cfg.lr_generators, cfg.lr_discriminators)
        .map_err(|e| TrainerError::Train(e.into()))?;
    run_loop(
        state,
        train,
        val,
        cfg,
        metric_params,
        out_dir,
        step_cap,
        false,
    )
}

#[allow(clippy::too_many_arguments)]
fn run_loop(
    mut state: TrainState,
    train: &dyn TrainData,
    val: &[ImagePair],
    cfg: &TrainingConfig,
    metric_params: &MetricParams,
    out_dir: &Path,
    step_cap: Option<u64>,
    append_logs: bool,
) -> Result<FitOutputs, TrainerError> {
    cfg.validate().map_err(TrainerError::Train)?;
    if train.len() < cfg.batch_size {
        return Err(TrainerError::TrainSetTooSmall {
            got: train.len(),
            batch: cfg.batch_size,
        });
    }
    if cfg.lr_generators == cfg.lr_discriminators {
        log::warn!(
            "TTUR disabled: generators and discriminators share learning rate {}",
            cfg.lr_generators
        );
    }

    let steps_per_epoch = (train.len() / cfg.batch_size) as u64;
    let total_steps = match step_cap {
        Some(cap) => state.step + cap,
        None => (cfg.epochs as u64) * steps_per_epoch,
    };
    fs::create_dir_all(out_dir).map_err(io_err(format!("creating {}", out_dir.display())))?;
    let ckpt_root = out_dir.join("checkpoints");
    let losses_csv = out_dir.join("losses.csv");
    let val_metrics_csv = out_dir.join("val_metrics.csv");
    let mut losses = open_log(&losses_csv, &LOSS_COLUMNS.join(","), append_logs)?;

    log::info!(
        "training: {} items, {} steps/epoch, steps {}..{}",
        train.len(),
        steps_per_epoch,
        state.step,
        total_steps
    );

    let mut order: Option<(u64, Vec<usize>)> = None;
    while state.step < total_steps {
        let step = state.step;
        let epoch = step / steps_per_epoch;
        if order.as_ref().map(|(e, _)| *e) != Some(epoch) {
            order = Some((epoch, epoch_order(train.len(), cfg.seed, epoch)));
        }
        let idx = &order.as_ref().unwrap().1;
        let pos = (step % steps_per_epoch) as usize;

        let mut batch = Vec::with_capacity(cfg.batch_size);
        for k in 0..cfg.batch_size {
            let tagged = train.get(idx[pos * cfg.batch_size + k])?;
            if tagged.lineage != Lineage::Train {
                return Err(TrainerError::ValLeakage(tagged.pair.id));
            }
            batch.push(tagged.pair);
        }

        let report = train_step(&mut state, &batch, cfg)?;
        writeln!(
            losses,
            "{step},{},{},{},{},{},{},{}",
            report.g1_total,
            report.g2_total,
            report.g2_adv_d1,
            report.g2_adv_d2,
            report.g2_content,
            report.d1_total,
            report.d2_total
        )
        .map_err(io_err("writing losses.csv"))?;

        let done = state.step;
        if done.is_multiple_of(cfg.checkpoint_every) {
            let dir = ckpt_root.join(format!("step_{done:06}"));
            checkpoint::save(&dir, &mut state, cfg)?;
            log::info!("checkpoint at step {done}: {}", dir.display());
        }
        if done.is_multiple_of(steps_per_epoch) {
            state.epoch = done / steps_per_epoch;
            if !val.is_empty() {
                let (agg, excluded) = validate_epoch(&mut state, val, metric_params);
                append_val_row(
                    &val_metrics_csv,
                    state.epoch,
                    &agg,
                    append_logs || state.epoch > 1,
                )?;
                if excluded > 0 {
                    log::warn!("validation: {excluded} items excluded");
                }
                log::info!(
                    "epoch {}: val ssim_rgb {:?} psnr_rgb {:?}",
                    state.epoch,
                    agg.ssim_rgb,
                    agg.psnr_rgb
                );
            }
        }
    }
    losses.flush().map_err(io_err("flushing losses.csv"))?;

    let final_checkpoint = ckpt_root.join("final");
    checkpoint::save(&final_checkpoint, &mut state, cfg)?;
    Ok(FitOutputs {
        state,
        final_checkpoint,
        losses_csv,
        val_metrics_csv,
    })
}

fn open_log(path: &Path, header: &str, append: bool) -> Result<fs::File, TrainerError> {
    let exists = path.is_file();
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(append && exists)
        .write(true)
        .truncate(!(append && exists))
        .open(path)
        .map_err(io_err(format!("opening {}", path.display())))?;
    if !(append && exists) {
        writeln!(file, "{header}").map_err(io_err("writing log header"))?;
    }
    Ok(file)
}

/// Runs the full generation pipeline over the validation pairs and
/// aggregates fusion metrics. Items that cannot run (indivisible sizes,
/// metric shape errors) are logged and excluded.
pub fn validate_epoch(
    state: &mut TrainState,
    val: &[ImagePair],
    metric_params: &MetricParams,
) -> (MetricRecord, usize) {
    let mut rows = Vec::with_capacity(val.len());
    let mut excluded = 0usize;
    for pair in val {
        match eval_pair(state, pair, metric_params) {
            Ok(record) => rows.push(record),
            Err(e) => {
                excluded += 1;
                log::warn!("validation pair {} excluded: {e}", pair.id);
            }
        }
    }
    let (agg, _per_column) = aggregate(&rows);
    (agg, excluded)
}

fn eval_pair(
    state: &mut TrainState,
    pair: &ImagePair,
    metric_params: &MetricParams,
) -> Result<MetricRecord, TrainerError> {
    let visible_m = pair.visible.to_model_domain()?;
    let gen_ir = generate_ir(&mut state.g1, &visible_m)?;
    let fused = fuse(&mut state.g2, &visible_m, &gen_ir)?;
    let fused_file = fused.from_model_domain()?;
    Ok(evaluate_triple(
        &pair.visible,
        &pair.infrared,
        &fused_file,
        metric_params,
    )?)
}

fn append_val_row(
    path: &Path,
    epoch: u64,
    record: &MetricRecord,
    append: bool,
) -> Result<(), TrainerError> {
    let header = format!("epoch,{}", MetricRecord::COLUMNS.join(","));
    let mut file = open_log(path, &header, append)?;
    let cells: Vec<String> = record
        .cells()
        .iter()
        .map(|c| c.map(|v| v.to_string()).unwrap_or_default())
        .collect();
    writeln!(file, "{epoch},{}", cells.join(",")).map_err(io_err("writing val_metrics.csv"))?;
    file.flush().map_err(io_err("flushing val_metrics.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use firegan_core::image::ValueDomain;
    use firegan_core::model::NetworkKind;
    use firegan_core::nn::random_tensor;
    use firegan_core::NetworkSpec;
    use tempfile::TempDir;

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
                depth: 2,
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

    fn file_pairs(n: usize, seed: u64) -> Vec<ImagePair> {
        (0..n)
            .map(|i| {
                let v = random_tensor(1, 8, 8, 3, 10.0, 240.0, seed + 2 * i as u64)
                    .to_image(0, ValueDomain::FileU8)
                    .unwrap();
                let r = random_tensor(1, 8, 8, 3, 10.0, 240.0, seed + 2 * i as u64 + 1)
                    .to_image(0, ValueDomain::FileU8)
                    .unwrap();
                ImagePair::new(v, r, format!("p{i}")).unwrap()
            })
            .collect()
    }

    fn quick_cfg() -> TrainingConfig {
        TrainingConfig {
            batch_size: 4,
            epochs: 2,
            checkpoint_every: 1000,
            seed: 3,
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn eight_pairs_batch_four_two_epochs_is_four_steps() {
        let dir = TempDir::new().unwrap();
        let train = InMemory::new(&file_pairs(8, 1), Lineage::Train).unwrap();
        let out = fit(
            &train,
            &[],
            tiny_specs(),
            &quick_cfg(),
            &MetricParams::default(),
            dir.path(),
            None,
        )
        .unwrap();
        assert_eq!(out.state.step, 4);
        assert_eq!(out.state.epoch, 2);
        let losses = std::fs::read_to_string(&out.losses_csv).unwrap();
        let lines: Vec<&str> = losses.lines().collect();
        assert_eq!(lines[0], LOSS_COLUMNS.join(","));
        assert_eq!(lines.len(), 5, "header plus one row per step");
        assert!(out.final_checkpoint.join("spec.json").is_file());
    }

    #[test]
    fn partial_final_batch_is_dropped() {
        let dir = TempDir::new().unwrap();
        // 10 pairs at batch 4 -> 2 steps per epoch
        let train = InMemory::new(&file_pairs(10, 2), Lineage::Train).unwrap();
        let out = fit(
            &train,
            &[],
            tiny_specs(),
            &quick_cfg(),
            &MetricParams::default(),
            dir.path(),
            None,
        )
        .unwrap();
        assert_eq!(out.state.step, 4);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let pairs = file_pairs(8, 7);
        let cfg = TrainingConfig {
            checkpoint_every: 2,
            ..quick_cfg()
        };
        let train = InMemory::new(&pairs, Lineage::Train).unwrap();

        let full_dir = TempDir::new().unwrap();
        let mut full = fit(
            &train,
            &[],
            tiny_specs(),
            &cfg,
            &MetricParams::default(),
            full_dir.path(),
            None,
        )
        .unwrap();

        let resumed_dir = TempDir::new().unwrap();
        let resume_cfg = TrainingConfig {
            resume_from: Some(
                full_dir
                    .path()
                    .join("checkpoints/step_000002")
                    .to_string_lossy()
                    .into_owned(),
            ),
            ..cfg
        };
        let mut resumed = fit(
            &train,
            &[],
            tiny_specs(),
            &resume_cfg,
            &MetricParams::default(),
            resumed_dir.path(),
            None,
        )
        .unwrap();
        assert_eq!(resumed.state.step, 4);

        let a = full.state.export_state();
        let b = resumed.state.export_state();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.name, y.name);
            assert_eq!(x.data, y.data, "{} diverged after resume", x.name);
        }
    }

    #[test]
    fn validation_lineage_cannot_reach_gradients() {
        let dir = TempDir::new().unwrap();
        let poisoned = InMemory::new(&file_pairs(8, 9), Lineage::Val).unwrap();
        let result = fit(
            &poisoned,
            &[],
            tiny_specs(),
            &quick_cfg(),
            &MetricParams::default(),
            dir.path(),
            None,
        );
        match result {
            Err(TrainerError::ValLeakage(id)) => assert!(id.starts_with('p'), "got id {id}"),
            Err(other) => panic!("wrong error: {other}"),
            Ok(_) => panic!("val-tagged data must not train"),
        }
    }

    #[test]
    fn step_cap_runs_exactly_one_step() {
        let dir = TempDir::new().unwrap();
        let train = InMemory::new(&file_pairs(8, 4), Lineage::Train).unwrap();
        let out = fit(
            &train,
            &[],
            tiny_specs(),
            &quick_cfg(),
            &MetricParams::default(),
            dir.path(),
            Some(1),
        )
        .unwrap();
        assert_eq!(out.state.step, 1);
    }

    #[test]
    fn val_metrics_row_per_epoch() {
        let dir = TempDir::new().unwrap();
        let pairs = file_pairs(8, 5);
        let train = InMemory::new(&pairs, Lineage::Train).unwrap();
        let out = fit(
            &train,
            &pairs[..2],
            tiny_specs(),
            &quick_cfg(),
            &MetricParams::default(),
            dir.path(),
            None,
        )
        .unwrap();
        let text = std::fs::read_to_string(&out.val_metrics_csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3, "header plus one row per epoch: {text}");
        assert!(lines[0].starts_with("epoch,en,"));
        assert!(lines[1].starts_with("1,"));
        assert!(lines[2].starts_with("2,"));
    }

    #[test]
    fn transfer_restarts_counters_but_keeps_parameters() {
        let dir = TempDir::new().unwrap();
        let pairs = file_pairs(8, 6);
        let train = InMemory::new(&pairs, Lineage::Train).unwrap();
        let base = fit(
            &train,
            &[],
            tiny_specs(),
            &quick_cfg(),
            &MetricParams::default(),
            dir.path(),
            None,
        )
        .unwrap();

        let mut pre = base.state;
        let pre_params = pre.g1.export_state();
        let t_dir = TempDir::new().unwrap();
        let t_cfg = TrainingConfig {
            batch_size: 4,
            epochs: 1,
            seed: 8,
            ..TrainingConfig::transfer_defaults()
        };
        assert_eq!(t_cfg.weights.gamma, 4.5);
        let mut out = transfer_learn(
            pre,
            &train,
            &[],
            &t_cfg,
            &MetricParams::default(),
            t_dir.path(),
            Some(0),
        )
        .unwrap();
        // cap 0: nothing ran, counters reset, parameters untouched
        assert_eq!(out.state.step, 0);
        assert_eq!(out.state.opts.g1.t, 0);
        let post_params = out.state.g1.export_state();
        for (x, y) in pre_params.iter().zip(&post_params) {
            assert_eq!(x.data, y.data);
        }
    }

    #[test]
    fn augmented_corpus_hits_target_and_is_deterministic() {
        let pool = file_pairs(3, 11);
        let corpus = AugmentedCorpus::build(pool.clone(), 7, 99);
        assert_eq!(corpus.len(), 7);
        // first item of each plan is the identity op
        let first = corpus.get(0).unwrap();
        assert_eq!(first.pair.id, "p0");
        assert_eq!(first.lineage, Lineage::Train);
        let again = corpus.get(5).unwrap();
        let again2 = corpus.get(5).unwrap();
        assert_eq!(again.pair, again2.pair);
        // model domain conversion happened
        assert_eq!(first.pair.visible.domain(), ValueDomain::ModelSigned);
    }

    #[test]
    fn epoch_orders_are_permutations_and_differ_by_epoch() {
        let a = epoch_order(100, 1, 0);
        let b = epoch_order(100, 1, 1);
        let again = epoch_order(100, 1, 0);
        assert_eq!(a, again);
        assert_ne!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
    }
}
