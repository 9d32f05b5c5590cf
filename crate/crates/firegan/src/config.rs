//! The TOML run configuration. Every field has a default, unknown keys
//! are rejected, and validation failures name the offending field. Two
//! fields resolve per command: `training.epochs` defaults to 40 for
//! `train` and 3 for `transfer`; `weights.gamma` to 1.0 and 4.5.

use std::path::{Path, PathBuf};

use firegan_core::losses::{GradientOp, LossWeights};
use firegan_core::model::NetworkKind;
use firegan_core::split::SplitSpec;
use firegan_core::train::{NetworkSpecs, TrainingConfig};
use firegan_core::{MetricParams, NetworkSpec};
use serde::{Deserialize, Serialize};

use crate::data::PairingRule;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Which epoch/gamma defaults apply when the config leaves them unset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Train,
    Transfer,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsSection,
    pub data: DataSection,
    pub split: SplitSection,
    pub training: TrainingSection,
    pub weights: WeightsSection,
    pub model: ModelSection,
    pub metrics: MetricsSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Directory of paired images for training commands.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus_dir: Option<PathBuf>,
    /// Where run outputs (logs, checkpoints, config echo) land.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Explicit manifests override the on-the-fly split.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub visible_suffix: String,
    pub infrared_suffix: String,
    /// Training resolution; pairs are resized here before training.
    pub target_height: usize,
    pub target_width: usize,
    /// Total augmented training items; 0 means
    /// `train pool x split.augmentation_factor`.
    pub augmented_target: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        let rule = PairingRule::default();
        Self {
            visible_suffix: rule.visible_suffix,
            infrared_suffix: rule.infrared_suffix,
            target_height: 256,
            target_width: 256,
            augmented_target: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    /// 0 takes everything left after validation.
    pub train_count: usize,
    pub val_count: usize,
    pub augmentation_factor: usize,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        let s = SplitSpec::default();
        Self {
            train_count: s.train_count,
            val_count: s.val_count,
            augmentation_factor: s.augmentation_factor,
            seed: s.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub batch_size: usize,
    /// Unset: 40 for train, 3 for transfer.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    pub lr_generators: f64,
    pub lr_discriminators: f64,
    pub d_update_period: u64,
    pub seed: u64,
    pub checkpoint_every: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resume_from: Option<String>,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let c = TrainingConfig::default();
        Self {
            batch_size: c.batch_size,
            epochs: None,
            lr_generators: c.lr_generators,
            lr_discriminators: c.lr_discriminators,
            d_update_period: c.d_update_period,
            seed: c.seed,
            checkpoint_every: c.checkpoint_every,
            resume_from: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsSection {
    /// Unset: 1.0 for train, 4.5 for transfer.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub lambda: f64,
    pub xi: f64,
    pub c1_label: f64,
    pub c2_label: f64,
    pub a_label: f64,
    pub d1_real_label: f64,
    pub d2_real_label: f64,
    pub content_norm_includes_channels: bool,
    pub gradient_op: GradientOp,
}

impl Default for WeightsSection {
    fn default() -> Self {
        let w = LossWeights::default();
        Self {
            gamma: None,
            lambda: w.lambda,
            xi: w.xi,
            c1_label: w.c1_label,
            c2_label: w.c2_label,
            a_label: w.a_label,
            d1_real_label: w.d1_real_label,
            d2_real_label: w.d2_real_label,
            content_norm_includes_channels: w.content_norm_includes_channels,
            gradient_op: w.gradient_op,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// "unet" or "encdec".
    pub g1_variant: String,
    pub g1_depth: usize,
    pub g1_base_filters: usize,
    pub g1_kernel_size: usize,
    pub g2_depth: usize,
    pub g2_base_filters: usize,
    pub g2_kernel_size: usize,
    pub d_depth: usize,
    pub d_base_filters: usize,
    pub d_kernel_size: usize,
    pub d_spectral_norm: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let g1 = NetworkSpec::g1_unet();
        let g2 = NetworkSpec::g2();
        let d = NetworkSpec::discriminator();
        Self {
            g1_variant: "unet".into(),
            g1_depth: g1.depth,
            g1_base_filters: g1.base_filters,
            g1_kernel_size: g1.kernel_size,
            g2_depth: g2.depth,
            g2_base_filters: g2.base_filters,
            g2_kernel_size: g2.kernel_size,
            d_depth: d.depth,
            d_base_filters: d.base_filters,
            d_kernel_size: d.kernel_size,
            d_spectral_norm: d.use_spectral_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub entropy_levels: usize,
    pub psnr_max: f64,
    pub ssim_alpha: f64,
    pub ssim_beta: f64,
    pub ssim_gamma: f64,
    pub ssim_c1: f64,
    pub ssim_c2: f64,
    pub ssim_c3: f64,
    pub ssim_window: usize,
    pub luma_first: bool,
}

impl Default for MetricsSection {
    fn default() -> Self {
        let p = MetricParams::default();
        Self {
            entropy_levels: p.entropy_levels,
            psnr_max: p.psnr_max,
            ssim_alpha: p.ssim_alpha,
            ssim_beta: p.ssim_beta,
            ssim_gamma: p.ssim_gamma,
            ssim_c1: p.ssim_c1,
            ssim_c2: p.ssim_c2,
            ssim_c3: p.ssim_c3,
            ssim_window: p.ssim_window,
            luma_first: p.luma_first,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn pairing_rule(&self) -> PairingRule {
        PairingRule {
            visible_suffix: self.data.visible_suffix.clone(),
            infrared_suffix: self.data.infrared_suffix.clone(),
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_count: self.split.train_count,
            val_count: self.split.val_count,
            augmentation_factor: self.split.augmentation_factor,
            seed: self.split.seed,
        }
    }

    pub fn metric_params(&self) -> MetricParams {
        let m = &self.metrics;
        MetricParams {
            entropy_levels: m.entropy_levels,
            psnr_max: m.psnr_max,
            ssim_alpha: m.ssim_alpha,
            ssim_beta: m.ssim_beta,
            ssim_gamma: m.ssim_gamma,
            ssim_c1: m.ssim_c1,
            ssim_c2: m.ssim_c2,
            ssim_c3: m.ssim_c3,
            ssim_window: m.ssim_window,
            luma_first: m.luma_first,
        }
    }

    pub fn network_specs(&self) -> Result<NetworkSpecs, ConfigError> {
        let m = &self.model;
        let g1_kind = match m.g1_variant.as_str() {
            "unet" => NetworkKind::G1Unet,
            "encdec" => NetworkKind::G1EncDec,
            other => {
                return Err(invalid(format!(
                    "g1_variant must be \"unet\" or \"encdec\", not {other:?}"
                )))
            }
        };
        Ok(NetworkSpecs {
            g1: NetworkSpec {
                kind: g1_kind,
                depth: m.g1_depth,
                base_filters: m.g1_base_filters,
                kernel_size: m.g1_kernel_size,
                use_spectral_norm: false,
                output_channels: 3,
            },
            g2: NetworkSpec {
                depth: m.g2_depth,
                base_filters: m.g2_base_filters,
                kernel_size: m.g2_kernel_size,
                ..NetworkSpec::g2()
            },
            d1: NetworkSpec {
                depth: m.d_depth,
                base_filters: m.d_base_filters,
                kernel_size: m.d_kernel_size,
                use_spectral_norm: m.d_spectral_norm,
                ..NetworkSpec::discriminator()
            },
            d2: NetworkSpec {
                depth: m.d_depth,
                base_filters: m.d_base_filters,
                kernel_size: m.d_kernel_size,
                use_spectral_norm: m.d_spectral_norm,
                ..NetworkSpec::discriminator()
            },
        })
    }

    pub fn loss_weights(&self, mode: RunMode) -> LossWeights {
        let w = &self.weights;
        LossWeights {
            gamma: w.gamma.unwrap_or(match mode {
                RunMode::Train => 1.0,
                RunMode::Transfer => 4.5,
            }),
            lambda: w.lambda,
            xi: w.xi,
            c1_label: w.c1_label,
            c2_label: w.c2_label,
            a_label: w.a_label,
            d1_real_label: w.d1_real_label,
            d2_real_label: w.d2_real_label,
            content_norm_includes_channels: w.content_norm_includes_channels,
            gradient_op: w.gradient_op,
        }
    }

    pub fn training_config(&self, mode: RunMode) -> TrainingConfig {
        let t = &self.training;
        TrainingConfig {
            batch_size: t.batch_size,
            epochs: t.epochs.unwrap_or(match mode {
                RunMode::Train => 40,
                RunMode::Transfer => 3,
            }),
            lr_generators: t.lr_generators,
            lr_discriminators: t.lr_discriminators,
            d_update_period: t.d_update_period,
            weights: self.loss_weights(mode),
            seed: t.seed,
            checkpoint_every: t.checkpoint_every,
            resume_from: t.resume_from.clone(),
        }
    }

    /// Field-naming validation, run before any work starts.
    pub fn validate(&self, mode: RunMode) -> Result<(), ConfigError> {
        let t = &self.training;
        if t.batch_size < 1 {
            return Err(invalid("batch_size must be at least 1"));
        }
        if t.epochs == Some(0) {
            return Err(invalid("epochs must be at least 1"));
        }
        if t.lr_generators <= 0.0 || t.lr_generators.is_nan() {
            return Err(invalid("lr_generators must be positive"));
        }
        if t.lr_discriminators <= 0.0 || t.lr_discriminators.is_nan() {
            return Err(invalid("lr_discriminators must be positive"));
        }
        if t.d_update_period < 1 {
            return Err(invalid("d_update_period must be at least 1"));
        }
        if t.checkpoint_every < 1 {
            return Err(invalid("checkpoint_every must be at least 1"));
        }
        let w = self.loss_weights(mode);
        if w.gamma <= 0.0 || w.gamma.is_nan() {
            return Err(invalid("gamma must be positive"));
        }
        if w.lambda < 0.0 || !w.lambda.is_finite() {
            return Err(invalid("lambda must be finite and nonnegative"));
        }
        if w.xi < 0.0 || !w.xi.is_finite() {
            return Err(invalid("xi must be finite and nonnegative"));
        }
        w.validate()
            .map_err(|e| invalid(format!("loss weights: {e}")))?;

        let specs = self.network_specs()?;
        specs
            .validate()
            .map_err(|e| invalid(format!("model: {e}")))?;
        let factor = 1usize << self.model.g1_depth;
        if !self.data.target_height.is_multiple_of(factor)
            || !self.data.target_width.is_multiple_of(factor)
        {
            return Err(invalid(format!(
                "target_height and target_width must be divisible by 2^g1_depth ({factor})"
            )));
        }

        self.metric_params()
            .validate()
            .map_err(|e| invalid(format!("metrics: {e}")))?;
        if self.split.augmentation_factor < 1 {
            return Err(invalid("augmentation_factor must be at least 1"));
        }
        Ok(())
    }

    /// The fully resolved config, with per-mode defaults substituted in,
    /// ready to echo beside run outputs.
    pub fn resolved(&self, mode: RunMode, seed_override: Option<u64>) -> RunConfig {
        let mut out = self.clone();
        out.training.epochs = Some(self.training_config(mode).epochs);
        out.weights.gamma = Some(self.loss_weights(mode).gamma);
        if let Some(seed) = seed_override {
            out.training.seed = seed;
        }
        out
    }

    pub fn echo_to(&self, path: &Path) -> Result<(), ConfigError> {
        let text = toml::to_string_pretty(self).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        std::fs::write(path, text).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}
