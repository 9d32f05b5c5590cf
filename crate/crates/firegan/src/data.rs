//! Corpus IO: raster decoding, visible/infrared pairing, manifests, and
//! the optional decoded-image cache.
//!
//! Images decode into the 8-bit file domain. Infrared rasters stored as a
//! single channel are replicated to 3 channels at load time so both
//! generator heads and D2 see equal channel counts.

use std::fs;
use std::path::{Path, PathBuf};

use firegan_core::image::ValueDomain;
use firegan_core::{ImagePair, ImageTensor};
use serde::{Deserialize, Serialize};

pub(crate) const EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "tif", "tiff"];

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("no infrared partner for {0}")]
    MissingPartner(PathBuf),
    #[error("pair {id}: visible is {visible:?}, infrared is {infrared:?}")]
    DimensionMismatch {
        id: String,
        visible: (usize, usize),
        infrared: (usize, usize),
    },
    #[error("cannot read {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },
    #[error("manifest {path} line {line}: {reason}")]
    BadManifest {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{0} holds no image pairs")]
    EmptyCorpus(PathBuf),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> DataError {
    let context = context.into();
    move |source| DataError::Io { context, source }
}

/// Filename convention binding the two members of a pair: stems
/// `<id><visible_suffix>` and `<id><infrared_suffix>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingRule {
    pub visible_suffix: String,
    pub infrared_suffix: String,
}

impl Default for PairingRule {
    fn default() -> Self {
        Self {
            visible_suffix: "_rgb".into(),
            infrared_suffix: "_nir".into(),
        }
    }
}

fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

/// Decodes a raster into the 8-bit file domain. Gray images stay
/// single-channel; everything else lands as 3-channel.
pub fn load_image(path: &Path) -> Result<ImageTensor, DataError> {
    let unreadable = |reason: String| DataError::Unreadable {
        path: path.to_path_buf(),
        reason,
    };
    let img = image::open(path).map_err(|e| unreadable(e.to_string()))?;
    use image::DynamicImage::*;
    let tensor = match img {
        ImageLuma8(_) | ImageLuma16(_) | ImageLumaA8(_) | ImageLumaA16(_) => {
            let g = img.to_luma8();
            let (w, h) = (g.width() as usize, g.height() as usize);
            let data = g.pixels().map(|p| p.0[0] as f64).collect();
            ImageTensor::new(h, w, 1, ValueDomain::FileU8, data)
        }
        _ => {
            let rgb = img.to_rgb8();
            let (w, h) = (rgb.width() as usize, rgb.height() as usize);
            let data = rgb
                .pixels()
                .flat_map(|p| p.0.iter().map(|&v| v as f64))
                .collect();
            ImageTensor::new(h, w, 3, ValueDomain::FileU8, data)
        }
    };
    tensor.map_err(|e| unreadable(e.to_string()))
}

/// Writes a file-domain image as 8-bit PNG, rounding half to even.
pub fn save_png(path: &Path, img: &ImageTensor) -> Result<(), DataError> {
    assert_eq!(img.domain(), ValueDomain::FileU8, "write from file domain");
    let quant = |v: f64| v.clamp(0.0, 255.0).round_ties_even() as u8;
    let (h, w) = (img.height() as u32, img.width() as u32);
    let bytes: Vec<u8> = img.data().iter().map(|&v| quant(v)).collect();
    let err = |e: image::ImageError| DataError::Unreadable {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    match img.channels() {
        1 => image::GrayImage::from_raw(w, h, bytes)
            .expect("raster size")
            .save(path)
            .map_err(err),
        _ => image::RgbImage::from_raw(w, h, bytes)
            .expect("raster size")
            .save(path)
            .map_err(err),
    }
}

fn stem_of(path: &Path) -> Option<&str> {
    path.file_stem().and_then(|s| s.to_str())
}

/// Scans a directory for visible/infrared pairs under the rule. Every file
/// carrying either suffix must have its partner; other files are ignored.
pub fn scan_corpus(
    root: &Path,
    rule: &PairingRule,
) -> Result<Vec<(String, PathBuf, PathBuf)>, DataError> {
    let mut files: Vec<PathBuf> = fs::read_dir(root)
        .map_err(io_err(format!("reading {}", root.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image_file(p))
        .collect();
    files.sort();

    let find = |stem: &str| files.iter().find(|p| stem_of(p) == Some(stem)).cloned();
    let mut pairs = Vec::new();
    for path in &files {
        let Some(stem) = stem_of(path) else { continue };
        if let Some(id) = stem.strip_suffix(rule.visible_suffix.as_str()) {
            let partner = find(&format!("{id}{}", rule.infrared_suffix))
                .ok_or_else(|| DataError::MissingPartner(path.clone()))?;
            pairs.push((id.to_string(), path.clone(), partner));
        } else if let Some(id) = stem.strip_suffix(rule.infrared_suffix.as_str()) {
            if find(&format!("{id}{}", rule.visible_suffix)).is_none() {
                return Err(DataError::MissingPartner(path.clone()));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(pairs)
}

fn build_pair(
    id: &str,
    visible: ImageTensor,
    infrared: ImageTensor,
) -> Result<ImagePair, DataError> {
    if visible.height() != infrared.height() || visible.width() != infrared.width() {
        return Err(DataError::DimensionMismatch {
            id: id.to_string(),
            visible: (visible.height(), visible.width()),
            infrared: (infrared.height(), infrared.width()),
        });
    }
    let infrared = if infrared.channels() == 1 {
        infrared.replicate_to_3()
    } else {
        infrared
    };
    ImagePair::new(visible, infrared, id.to_string()).map_err(|e| DataError::Unreadable {
        path: PathBuf::from(id),
        reason: e.to_string(),
    })
}

/// Loads every pair under `root`, in lexicographic id order.
pub fn load_corpus(root: &Path, rule: &PairingRule) -> Result<Vec<ImagePair>, DataError> {
    let mut out = Vec::new();
    for (id, vis_path, ir_path) in scan_corpus(root, rule)? {
        let visible = load_image(&vis_path)?;
        let infrared = load_image(&ir_path)?;
        out.push(build_pair(&id, visible, infrared)?);
    }
    if out.is_empty() {
        return Err(DataError::EmptyCorpus(root.to_path_buf()));
    }
    Ok(out)
}

/// One line of a corpus manifest CSV: `id,visible_path,infrared_path`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    pub visible_path: PathBuf,
    pub infrared_path: PathBuf,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>, DataError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| DataError::BadManifest {
        path: path.to_path_buf(),
        line: 0,
        reason: e.to_string(),
    })?;
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<ManifestRow>().enumerate() {
        rows.push(rec.map_err(|e| DataError::BadManifest {
            path: path.to_path_buf(),
            line: i + 2,
            reason: e.to_string(),
        })?);
    }
    Ok(rows)
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| DataError::Io {
        context: format!("writing {}", path.display()),
        source: std::io::Error::other(e),
    })?;
    for row in rows {
        writer.serialize(row).map_err(|e| DataError::Io {
            context: format!("writing {}", path.display()),
            source: std::io::Error::other(e),
        })?;
    }
    writer
        .flush()
        .map_err(io_err(format!("writing {}", path.display())))
}

/// Loads the pairs named by a manifest, in manifest order.
pub fn load_manifest_pairs(path: &Path) -> Result<Vec<ImagePair>, DataError> {
    let rows = read_manifest(path)?;
    let mut out = Vec::with_capacity(rows.len());
    for row in &rows {
        let visible = load_image(&row.visible_path)?;
        let infrared = load_image(&row.infrared_path)?;
        out.push(build_pair(&row.id, visible, infrared)?);
    }
    Ok(out)
}

/// Ids per split, as written by `make-splits`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
}

pub fn write_split_manifest(path: &Path, manifest: &SplitManifest) -> Result<(), DataError> {
    let text = serde_json::to_string_pretty(manifest).expect("serializable");
    fs::write(path, text).map_err(io_err(format!("writing {}", path.display())))
}

pub fn read_split_manifest(path: &Path) -> Result<SplitManifest, DataError> {
    let text = fs::read_to_string(path).map_err(io_err(format!("reading {}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| DataError::BadManifest {
        path: path.to_path_buf(),
        line: e.line(),
        reason: e.to_string(),
    })
}

/// Snaps file-domain values to the integers a PNG write would produce,
/// so in-memory evaluation matches evaluation of written files.
pub fn quantize_u8_grid(img: &ImageTensor) -> ImageTensor {
    let data = img
        .data()
        .iter()
        .map(|v| v.clamp(0.0, 255.0).round_ties_even())
        .collect();
    ImageTensor::new(
        img.height(),
        img.width(),
        img.channels(),
        ValueDomain::FileU8,
        data,
    )
    .expect("quantized values stay in domain")
}

/// Resizes both members to the target and snaps values back to the 8-bit
/// grid, so results are identical whether or not they pass through the
/// PNG cache.
pub fn resize_pair(pair: &ImagePair, h: usize, w: usize) -> Result<ImagePair, DataError> {
    if pair.visible.height() == h && pair.visible.width() == w {
        return Ok(pair.clone());
    }
    let map_err = |e: firegan_core::image::ImageError| DataError::Unreadable {
        path: PathBuf::from(&pair.id),
        reason: e.to_string(),
    };
    let visible = quantize_u8_grid(&pair.visible.resize_bilinear(h, w).map_err(map_err)?);
    let infrared = quantize_u8_grid(&pair.infrared.resize_bilinear(h, w).map_err(map_err)?);
    Ok(ImagePair::new(visible, infrared, pair.id.clone()).expect("resize keeps registration"))
}

fn cache_key(root: &Path, target: Option<(usize, usize)>) -> String {
    let canon = root.canonicalize().unwrap_or_else(|_| root.to_path_buf());
    let mut key: String = canon
        .to_string_lossy()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    if let Some((h, w)) = target {
        key.push_str(&format!("_{h}x{w}"));
    }
    key.trim_matches('_').to_string()
}

/// `load_corpus` + optional resize, cached as PNGs under
/// `$FIREGAN_CACHE_DIR` when that variable is set. The u8-grid snap in
/// [`resize_pair`] makes the cache lossless.
pub fn load_corpus_cached(
    root: &Path,
    rule: &PairingRule,
    target: Option<(usize, usize)>,
) -> Result<Vec<ImagePair>, DataError> {
    let cache_root = std::env::var_os("FIREGAN_CACHE_DIR").map(PathBuf::from);
    let cache_dir = cache_root.map(|c| c.join(cache_key(root, target)));

    if let Some(dir) = &cache_dir {
        let index = dir.join("index.json");
        if index.is_file() {
            let ids: Vec<String> = serde_json::from_str(
                &fs::read_to_string(&index).map_err(io_err("reading cache index"))?,
            )
            .map_err(|e| DataError::BadManifest {
                path: index.clone(),
                line: e.line(),
                reason: e.to_string(),
            })?;
            log::debug!("loading {} pairs from cache {}", ids.len(), dir.display());
            let mut out = Vec::with_capacity(ids.len());
            for id in &ids {
                let visible = load_image(&dir.join(format!("{id}{}.png", rule.visible_suffix)))?;
                let infrared = load_image(&dir.join(format!("{id}{}.png", rule.infrared_suffix)))?;
                out.push(build_pair(id, visible, infrared)?);
            }
            return Ok(out);
        }
    }

    let mut corpus = load_corpus(root, rule)?;
    if let Some((h, w)) = target {
        for pair in &mut corpus {
            *pair = resize_pair(pair, h, w)?;
        }
    }

    if let Some(dir) = &cache_dir {
        fs::create_dir_all(dir).map_err(io_err("creating cache dir"))?;
        for pair in &corpus {
            save_png(
                &dir.join(format!("{}{}.png", pair.id, rule.visible_suffix)),
                &pair.visible,
            )?;
            save_png(
                &dir.join(format!("{}{}.png", pair.id, rule.infrared_suffix)),
                &pair.infrared,
            )?;
        }
        let ids: Vec<&str> = corpus.iter().map(|p| p.id.as_str()).collect();
        fs::write(
            dir.join("index.json"),
            serde_json::to_string(&ids).expect("serializable"),
        )
        .map_err(io_err("writing cache index"))?;
        log::debug!("cached {} pairs at {}", corpus.len(), dir.display());
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn write_gradient(path: &Path, h: u32, w: u32, channels: u8, offset: u8) {
        if channels == 1 {
            let img = image::GrayImage::from_fn(w, h, |x, y| {
                image::Luma([((x + y) as u8).wrapping_add(offset)])
            });
            img.save(path).unwrap();
        } else {
            let img = image::RgbImage::from_fn(w, h, |x, y| image::Rgb([x as u8, y as u8, offset]));
            img.save(path).unwrap();
        }
    }

    #[test]
    fn pairs_load_in_id_order_with_gray_ir_replicated() {
        let dir = TempDir::new().unwrap();
        for id in ["b", "a"] {
            write_gradient(&dir.path().join(format!("{id}_rgb.png")), 6, 8, 3, 0);
            write_gradient(&dir.path().join(format!("{id}_nir.png")), 6, 8, 1, 3);
        }
        let corpus = load_corpus(dir.path(), &PairingRule::default()).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus[0].id, "a");
        assert_eq!(corpus[1].id, "b");
        assert_eq!(corpus[0].infrared.channels(), 3);
        assert_eq!(corpus[0].visible.height(), 6);
        assert_eq!(corpus[0].visible.width(), 8);
        // replicated channels carry identical values
        let ir = &corpus[0].infrared;
        assert_eq!(ir.get(2, 3, 0), ir.get(2, 3, 1));
        assert_eq!(ir.get(2, 3, 0), ir.get(2, 3, 2));
    }

    #[test]
    fn missing_partner_is_named() {
        let dir = TempDir::new().unwrap();
        write_gradient(&dir.path().join("a_rgb.png"), 4, 4, 3, 0);
        let err = load_corpus(dir.path(), &PairingRule::default()).unwrap_err();
        match err {
            DataError::MissingPartner(p) => {
                assert!(p.to_string_lossy().contains("a_rgb.png"))
            }
            other => panic!("wrong error: {other}"),
        }
        // and the mirror case: infrared without visible
        let dir = TempDir::new().unwrap();
        write_gradient(&dir.path().join("a_nir.png"), 4, 4, 1, 0);
        assert!(matches!(
            load_corpus(dir.path(), &PairingRule::default()),
            Err(DataError::MissingPartner(_))
        ));
    }

    #[test]
    fn dimension_mismatch_names_the_pair() {
        let dir = TempDir::new().unwrap();
        write_gradient(&dir.path().join("a_rgb.png"), 4, 4, 3, 0);
        write_gradient(&dir.path().join("a_nir.png"), 4, 6, 1, 0);
        let err = load_corpus(dir.path(), &PairingRule::default()).unwrap_err();
        match err {
            DataError::DimensionMismatch { id, .. } => assert_eq!(id, "a"),
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn unreadable_file_is_reported() {
        let dir = TempDir::new().unwrap();
        std::fs::write(dir.path().join("a_rgb.png"), b"not a png").unwrap();
        write_gradient(&dir.path().join("a_nir.png"), 4, 4, 1, 0);
        assert!(matches!(
            load_corpus(dir.path(), &PairingRule::default()),
            Err(DataError::Unreadable { .. })
        ));
    }

    #[test]
    fn png_roundtrip_is_exact_for_u8_grid_values() {
        let dir = TempDir::new().unwrap();
        let img = ImageTensor::new(
            3,
            2,
            3,
            ValueDomain::FileU8,
            (0..18).map(|i| (i * 13 % 256) as f64).collect(),
        )
        .unwrap();
        let path = dir.path().join("x.png");
        save_png(&path, &img).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.data(), img.data());
    }

    #[test]
    fn manifest_roundtrip_and_pair_loading() {
        let dir = TempDir::new().unwrap();
        write_gradient(&dir.path().join("x_rgb.png"), 4, 4, 3, 0);
        write_gradient(&dir.path().join("x_nir.png"), 4, 4, 1, 0);
        let rows = vec![ManifestRow {
            id: "x".into(),
            visible_path: dir.path().join("x_rgb.png"),
            infrared_path: dir.path().join("x_nir.png"),
        }];
        let mpath = dir.path().join("manifest.csv");
        write_manifest(&mpath, &rows).unwrap();
        assert_eq!(read_manifest(&mpath).unwrap(), rows);
        let pairs = load_manifest_pairs(&mpath).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].id, "x");
    }

    #[test]
    fn cache_produces_identical_corpus() {
        let dir = TempDir::new().unwrap();
        let cache = TempDir::new().unwrap();
        for id in ["p", "q"] {
            write_gradient(&dir.path().join(format!("{id}_rgb.png")), 10, 10, 3, 1);
            write_gradient(&dir.path().join(format!("{id}_nir.png")), 10, 10, 1, 2);
        }
        // resizing to 8x8 exercises the u8-grid snap that keeps the
        // cache lossless
        std::env::set_var("FIREGAN_CACHE_DIR", cache.path());
        let first = load_corpus_cached(dir.path(), &PairingRule::default(), Some((8, 8))).unwrap();
        let second = load_corpus_cached(dir.path(), &PairingRule::default(), Some((8, 8))).unwrap();
        std::env::remove_var("FIREGAN_CACHE_DIR");
        let uncached =
            load_corpus_cached(dir.path(), &PairingRule::default(), Some((8, 8))).unwrap();
        assert_eq!(first, second);
        assert_eq!(first, uncached);
    }
}
