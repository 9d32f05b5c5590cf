//! Checkpoint directories: a JSON header with specs, config and counters,
//! a manifest describing every parameter blob, and one little-endian f64
//! binary file per named array. Loading validates every shape.

use std::fs;
use std::path::{Path, PathBuf};

use firegan_core::nn::StateEntry;
use firegan_core::train::{NetworkSpecs, TrainState, TrainingConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not a checkpoint: {reason}")]
    BadFormat { path: PathBuf, reason: String },
    #[error("blob {name}: manifest says {expected} values, file holds {got}")]
    BlobSizeMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("state rejected: {0}")]
    State(#[from] firegan_core::model::ModelError),
    #[error("config rejected: {0}")]
    Config(firegan_core::train::TrainError),
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CheckpointError {
    let context = context.into();
    move |source| CheckpointError::Io { context, source }
}

/// `spec.json`: everything about a run except the parameter arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub specs: NetworkSpecs,
    pub config: TrainingConfig,
    pub step: u64,
    pub epoch: u64,
    pub d_updates: u64,
    pub seed: u64,
    /// Optimizer step counters (g1, g2, d1, d2) for exact bias correction
    /// on resume.
    pub adam_steps: [u64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BlobEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    byte_order: String,
    file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BlobManifest {
    blobs: Vec<BlobEntry>,
}

fn blob_file_name(entry_name: &str) -> String {
    let safe: String = entry_name
        .chars()
        .map(|c| if c == '/' { '.' } else { c })
        .collect();
    format!("{safe}.bin")
}

fn write_blob(path: &Path, data: &[f64]) -> Result<(), CheckpointError> {
    let mut bytes = Vec::with_capacity(data.len() * 8);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(io_err(format!("writing {}", path.display())))
}

fn read_blob(path: &Path) -> Result<Vec<f64>, CheckpointError> {
    let bytes = fs::read(path).map_err(io_err(format!("reading {}", path.display())))?;
    if bytes.len() % 8 != 0 {
        return Err(CheckpointError::BadFormat {
            path: path.to_path_buf(),
            reason: "blob length not a multiple of 8".into(),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Writes `state` under `dir` (created if absent, overwritten if present).
pub fn save(
    dir: &Path,
    state: &mut TrainState,
    cfg: &TrainingConfig,
) -> Result<(), CheckpointError> {
    fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))?;
    let header = CheckpointHeader {
        specs: state.specs,
        config: cfg.clone(),
        step: state.step,
        epoch: state.epoch,
        d_updates: state.d_updates,
        seed: state.seed,
        adam_steps: state.adam_steps(),
    };
    fs::write(
        dir.join("spec.json"),
        serde_json::to_string_pretty(&header).expect("serializable"),
    )
    .map_err(io_err("writing spec.json"))?;

    let entries = state.export_state();
    let mut blobs = Vec::with_capacity(entries.len());
    for entry in &entries {
        let file = blob_file_name(&entry.name);
        write_blob(&dir.join(&file), &entry.data)?;
        blobs.push(BlobEntry {
            name: entry.name.clone(),
            shape: entry.shape.clone(),
            dtype: "f64".into(),
            byte_order: "little".into(),
            file,
        });
    }
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&BlobManifest { blobs }).expect("serializable"),
    )
    .map_err(io_err("writing manifest.json"))
}

pub fn read_header(dir: &Path) -> Result<CheckpointHeader, CheckpointError> {
    let path = dir.join("spec.json");
    let text = fs::read_to_string(&path).map_err(io_err(format!("reading {}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CheckpointError::BadFormat {
        path,
        reason: e.to_string(),
    })
}

/// Rebuilds a [`TrainState`] from a checkpoint directory. Every blob is
/// checked against its manifest shape, then against the network specs.
pub fn load(dir: &Path) -> Result<(TrainState, TrainingConfig), CheckpointError> {
    let header = read_header(dir)?;
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path)
        .map_err(io_err(format!("reading {}", manifest_path.display())))?;
    let manifest: BlobManifest =
        serde_json::from_str(&text).map_err(|e| CheckpointError::BadFormat {
            path: manifest_path.clone(),
            reason: e.to_string(),
        })?;

    let mut entries = Vec::with_capacity(manifest.blobs.len());
    for blob in &manifest.blobs {
        if blob.dtype != "f64" || blob.byte_order != "little" {
            return Err(CheckpointError::BadFormat {
                path: manifest_path.clone(),
                reason: format!(
                    "blob {} has dtype {}/{}",
                    blob.name, blob.dtype, blob.byte_order
                ),
            });
        }
        let data = read_blob(&dir.join(&blob.file))?;
        let expected: usize = blob.shape.iter().product();
        if data.len() != expected {
            return Err(CheckpointError::BlobSizeMismatch {
                name: blob.name.clone(),
                expected,
                got: data.len(),
            });
        }
        entries.push(StateEntry {
            name: blob.name.clone(),
            shape: blob.shape.clone(),
            data,
        });
    }

    let mut state =
        TrainState::new(header.specs, &header.config).map_err(CheckpointError::Config)?;
    state.import_state(&entries)?;
    state.step = header.step;
    state.epoch = header.epoch;
    state.d_updates = header.d_updates;
    state.seed = header.seed;
    state.set_adam_steps(header.adam_steps);
    Ok((state, header.config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use firegan_core::model::NetworkKind;
    use firegan_core::nn::{random_tensor, Mode};
    use firegan_core::NetworkSpec;
    use tempfile::TempDir;

    fn tiny() -> (NetworkSpecs, TrainingConfig) {
        let specs = NetworkSpecs {
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
        };
        let cfg = TrainingConfig {
            batch_size: 2,
            seed: 11,
            ..TrainingConfig::default()
        };
        (specs, cfg)
    }

    #[test]
    fn roundtrip_restores_forward_bit_exactly() {
        let (specs, cfg) = tiny();
        let mut state = TrainState::new(specs, &cfg).unwrap();
        state.step = 17;
        state.epoch = 3;
        state.d_updates = 9;
        let dir = TempDir::new().unwrap();
        save(dir.path(), &mut state, &cfg).unwrap();

        let probe = random_tensor(1, 8, 8, 3, -1.0, 1.0, 5);
        let before = state.g1.forward(&probe, Mode::Eval).unwrap();

        let (mut loaded, loaded_cfg) = load(dir.path()).unwrap();
        assert_eq!(loaded_cfg, cfg);
        assert_eq!(loaded.step, 17);
        assert_eq!(loaded.epoch, 3);
        assert_eq!(loaded.d_updates, 9);
        let after = loaded.g1.forward(&probe, Mode::Eval).unwrap();
        assert_eq!(before.data, after.data);

        // full state dump identical, not just one forward
        let a = state.export_state();
        let b = loaded.export_state();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.name, y.name);
            assert_eq!(x.data, y.data, "blob {} diverged", x.name);
        }
    }

    #[test]
    fn corrupted_blob_size_is_rejected() {
        let (specs, cfg) = tiny();
        let mut state = TrainState::new(specs, &cfg).unwrap();
        let dir = TempDir::new().unwrap();
        save(dir.path(), &mut state, &cfg).unwrap();
        // truncate one blob behind the manifest's back
        let manifest: BlobManifest = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("manifest.json")).unwrap(),
        )
        .unwrap();
        let victim = dir.path().join(&manifest.blobs[0].file);
        let bytes = std::fs::read(&victim).unwrap();
        std::fs::write(&victim, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(
            load(dir.path()),
            Err(CheckpointError::BlobSizeMismatch { .. })
        ));
    }

    #[test]
    fn missing_header_is_a_format_error() {
        let dir = TempDir::new().unwrap();
        assert!(matches!(load(dir.path()), Err(CheckpointError::Io { .. })));
    }
}
