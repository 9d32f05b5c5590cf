//! Batch evaluation of fusion outputs: per-item metric rows, aggregate
//! means, five-number boxplot summaries, and side-by-side comparison of
//! multiple runs over one manifest.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use firegan_core::image::ImageError;
use firegan_core::metrics::{aggregate, evaluate_generated_ir, evaluate_triple, MetricError};
use firegan_core::model::{fuse, generate_ir, ModelError};
use firegan_core::train::TrainState;
use firegan_core::{ImagePair, ImageTensor, MetricParams, MetricRecord};

use crate::checkpoint::{self, CheckpointError};
use crate::data::{self, DataError, ManifestRow};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{0}")]
    Data(#[from] DataError),
    #[error("{0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("{0}")]
    Metric(#[from] MetricError),
    #[error("{0}")]
    Model(#[from] ModelError),
    #[error("{0}")]
    Image(#[from] ImageError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("jobs disagree on the corpus manifest: {a} vs {b}")]
    ManifestMismatch { a: PathBuf, b: PathBuf },
    #[error("no jobs to compare")]
    NoJobs,
    #[error("every manifest item failed; nothing to aggregate")]
    NothingEvaluated,
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> EvalError {
    let context = context.into();
    move |source| EvalError::Io { context, source }
}

/// Where the fused image of each pair comes from: the model pipeline of a
/// checkpoint (visible -> G1 -> G2), or a directory of files produced by
/// any method, keyed by pair id.
#[derive(Debug, Clone)]
pub enum TripleSource {
    Checkpoint(PathBuf),
    FusedDir(PathBuf),
}

#[derive(Debug, Clone)]
pub struct EvalJob {
    pub label: String,
    pub source: TripleSource,
    pub manifest: PathBuf,
    pub metric_params: MetricParams,
    pub output_dir: PathBuf,
}

pub struct EvalResult {
    pub label: String,
    /// Fused-image metrics per item, manifest order, failures dropped.
    pub fused: Vec<(String, MetricRecord)>,
    pub fused_aggregate: MetricRecord,
    /// Generated-IR metrics (checkpoint sources only).
    pub generated_ir: Option<Vec<(String, MetricRecord)>>,
    pub generated_ir_aggregate: Option<MetricRecord>,
    /// Ids that failed structurally and were excluded, with reasons.
    pub excluded: Vec<(String, String)>,
}

enum FusedProvider {
    Model(Box<TrainState>),
    Directory(PathBuf),
}

impl FusedProvider {
    /// Returns (fused, generated_ir) in the file domain, quantized to the
    /// u8 grid like any written output.
    fn fused_for(
        &mut self,
        pair: &ImagePair,
    ) -> Result<(ImageTensor, Option<ImageTensor>), EvalError> {
        match self {
            FusedProvider::Model(state) => {
                let visible_m = pair.visible.to_model_domain()?;
                let gen_ir = generate_ir(&mut state.g1, &visible_m)?;
                let fused = fuse(&mut state.g2, &visible_m, &gen_ir)?;
                Ok((
                    data::quantize_u8_grid(&fused.from_model_domain()?),
                    Some(data::quantize_u8_grid(&gen_ir.from_model_domain()?)),
                ))
            }
            FusedProvider::Directory(dir) => {
                let file = find_fused_file(dir, &pair.id).ok_or_else(|| {
                    EvalError::Data(DataError::MissingPartner(
                        dir.join(format!("{}_fused.png", pair.id)),
                    ))
                })?;
                Ok((data::load_image(&file)?, None))
            }
        }
    }
}

fn find_fused_file(dir: &Path, id: &str) -> Option<PathBuf> {
    for stem in [format!("{id}_fused"), id.to_string()] {
        for ext in data::EXTENSIONS {
            let candidate = dir.join(format!("{stem}.{ext}"));
            if candidate.is_file() {
                return Some(candidate);
            }
        }
    }
    None
}

/// Evaluates one job: loads each manifest triple, computes the seven
/// fusion metrics (and, for checkpoints, the generated-IR metrics), and
/// writes per_item.csv, aggregate.csv and boxplot_summary.csv.
pub fn run_eval(job: &EvalJob) -> Result<EvalResult, EvalError> {
    let rows = data::read_manifest(&job.manifest)?;
    let mut provider = match &job.source {
        TripleSource::Checkpoint(dir) => {
            let (state, _) = checkpoint::load(dir)?;
            FusedProvider::Model(Box::new(state))
        }
        TripleSource::FusedDir(dir) => FusedProvider::Directory(dir.clone()),
    };

    let mut fused_rows = Vec::new();
    let mut genir_rows = Vec::new();
    let mut excluded = Vec::new();
    for row in &rows {
        match eval_item(row, &mut provider, &job.metric_params) {
            Ok((fused_rec, genir_rec)) => {
                fused_rows.push((row.id.clone(), fused_rec));
                if let Some(rec) = genir_rec {
                    genir_rows.push((row.id.clone(), rec));
                }
            }
            Err(e) => {
                log::warn!("item {} excluded: {e}", row.id);
                excluded.push((row.id.clone(), e.to_string()));
            }
        }
    }
    if fused_rows.is_empty() {
        return Err(EvalError::NothingEvaluated);
    }
    if !excluded.is_empty() {
        log::warn!(
            "{}: {} of {} items excluded",
            job.label,
            excluded.len(),
            rows.len()
        );
    }

    let (fused_aggregate, _) = aggregate(&records_of(&fused_rows));
    let generated_ir_aggregate =
        (!genir_rows.is_empty()).then(|| aggregate(&records_of(&genir_rows)).0);

    fs::create_dir_all(&job.output_dir)
        .map_err(io_err(format!("creating {}", job.output_dir.display())))?;
    write_per_item(&job.output_dir.join("per_item.csv"), &fused_rows)?;
    if !genir_rows.is_empty() {
        write_per_item(&job.output_dir.join("per_item_genir.csv"), &genir_rows)?;
    }
    write_aggregate(
        &job.output_dir.join("aggregate.csv"),
        &fused_aggregate,
        fused_rows.len(),
        excluded.len(),
        generated_ir_aggregate
            .as_ref()
            .map(|a| (a, genir_rows.len())),
    )?;
    write_boxplot(
        &job.output_dir.join("boxplot_summary.csv"),
        &records_of(&fused_rows),
    )?;

    Ok(EvalResult {
        label: job.label.clone(),
        fused: fused_rows,
        fused_aggregate,
        generated_ir: (!genir_rows.is_empty()).then_some(genir_rows),
        generated_ir_aggregate,
        excluded,
    })
}

fn eval_item(
    row: &ManifestRow,
    provider: &mut FusedProvider,
    params: &MetricParams,
) -> Result<(MetricRecord, Option<MetricRecord>), EvalError> {
    let visible = data::load_image(&row.visible_path)?;
    let infrared = data::load_image(&row.infrared_path)?;
    let infrared = if infrared.channels() == 1 {
        infrared.replicate_to_3()
    } else {
        infrared
    };
    let pair = ImagePair::new(visible, infrared, row.id.clone())?;
    let (fused, gen_ir) = provider.fused_for(&pair)?;
    let fused_rec = evaluate_triple(&pair.visible, &pair.infrared, &fused, params)?;
    let genir_rec = gen_ir
        .map(|g| evaluate_generated_ir(&pair.infrared, &g, params))
        .transpose()?;
    Ok((fused_rec, genir_rec))
}

fn records_of(rows: &[(String, MetricRecord)]) -> Vec<MetricRecord> {
    rows.iter().map(|(_, r)| *r).collect()
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_per_item(path: &Path, rows: &[(String, MetricRecord)]) -> Result<(), EvalError> {
    let mut file =
        fs::File::create(path).map_err(io_err(format!("creating {}", path.display())))?;
    writeln!(file, "id,{}", MetricRecord::COLUMNS.join(",")).map_err(io_err("writing header"))?;
    for (id, rec) in rows {
        let cells: Vec<String> = rec.cells().iter().map(|c| cell(*c)).collect();
        writeln!(file, "{id},{}", cells.join(",")).map_err(io_err("writing row"))?;
    }
    Ok(())
}

fn write_aggregate(
    path: &Path,
    fused: &MetricRecord,
    fused_items: usize,
    excluded: usize,
    genir: Option<(&MetricRecord, usize)>,
) -> Result<(), EvalError> {
    let mut file =
        fs::File::create(path).map_err(io_err(format!("creating {}", path.display())))?;
    writeln!(
        file,
        "subject,{},items,excluded",
        MetricRecord::COLUMNS.join(",")
    )
    .map_err(io_err("writing header"))?;
    let fused_cells: Vec<String> = fused.cells().iter().map(|c| cell(*c)).collect();
    writeln!(
        file,
        "fused,{},{fused_items},{excluded}",
        fused_cells.join(",")
    )
    .map_err(io_err("writing row"))?;
    if let Some((rec, items)) = genir {
        let cells: Vec<String> = rec.cells().iter().map(|c| cell(*c)).collect();
        writeln!(file, "generated_ir,{},{items},{excluded}", cells.join(","))
            .map_err(io_err("writing row"))?;
    }
    Ok(())
}

/// Five-number summary (min, quartiles by linear interpolation, max) of
/// the finite per-item values of one metric column.
pub fn five_number_summary(values: &[f64]) -> Option<[f64; 5]> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Some([v[0], q(0.25), q(0.5), q(0.75), v[v.len() - 1]])
}

fn write_boxplot(path: &Path, records: &[MetricRecord]) -> Result<(), EvalError> {
    let mut file =
        fs::File::create(path).map_err(io_err(format!("creating {}", path.display())))?;
    writeln!(file, "metric,min,q1,median,q3,max").map_err(io_err("writing header"))?;
    for (col, name) in MetricRecord::COLUMNS.iter().enumerate() {
        let values: Vec<f64> = records.iter().filter_map(|r| r.cells()[col]).collect();
        if let Some([min, q1, med, q3, max]) = five_number_summary(&values) {
            writeln!(file, "{name},{min},{q1},{med},{q3},{max}").map_err(io_err("writing row"))?;
        }
    }
    Ok(())
}

/// One metric row per line, one column per evaluated job.
pub struct Comparison {
    pub labels: Vec<String>,
    /// `rows[metric][job]` following `MetricRecord::COLUMNS` order.
    pub rows: Vec<Vec<Option<f64>>>,
    pub results: Vec<EvalResult>,
}

impl Comparison {
    /// Plain-text table, columns aligned.
    pub fn render_text(&self) -> String {
        let mut widths: Vec<usize> = self.labels.iter().map(|l| l.len().max(8)).collect();
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let s = match v {
                            Some(x) if x.is_infinite() => "inf".to_string(),
                            Some(x) => format!("{x:.4}"),
                            None => "-".to_string(),
                        };
                        widths[j] = widths[j].max(s.len());
                        s
                    })
                    .collect()
            })
            .collect();
        let name_w = MetricRecord::COLUMNS.iter().map(|c| c.len()).max().unwrap();
        let mut out = format!("{:name_w$}", "metric");
        for (label, w) in self.labels.iter().zip(&widths) {
            out.push_str(&format!("  {label:>w$}"));
        }
        out.push('\n');
        for (i, name) in MetricRecord::COLUMNS.iter().enumerate() {
            out.push_str(&format!("{name:name_w$}"));
            for (j, w) in widths.iter().enumerate() {
                out.push_str(&format!("  {:>w$}", cells[i][j]));
            }
            out.push('\n');
        }
        out
    }
}

/// Runs every job over the shared manifest and tabulates the aggregates
/// side by side; writes `comparison.csv` under `out_dir`.
pub fn compare_runs(jobs: &[EvalJob], out_dir: &Path) -> Result<Comparison, EvalError> {
    if jobs.is_empty() {
        return Err(EvalError::NoJobs);
    }
    let canon = |p: &Path| p.canonicalize().unwrap_or_else(|_| p.to_path_buf());
    let first = canon(&jobs[0].manifest);
    for job in &jobs[1..] {
        let other = canon(&job.manifest);
        if other != first {
            return Err(EvalError::ManifestMismatch {
                a: first.clone(),
                b: other,
            });
        }
    }

    let results: Vec<EvalResult> = jobs.iter().map(run_eval).collect::<Result<_, _>>()?;
    let labels: Vec<String> = results.iter().map(|r| r.label.clone()).collect();
    let rows: Vec<Vec<Option<f64>>> = (0..MetricRecord::COLUMNS.len())
        .map(|col| {
            results
                .iter()
                .map(|r| r.fused_aggregate.cells()[col])
                .collect()
        })
        .collect();

    fs::create_dir_all(out_dir).map_err(io_err(format!("creating {}", out_dir.display())))?;
    let path = out_dir.join("comparison.csv");
    let mut file =
        fs::File::create(&path).map_err(io_err(format!("creating {}", path.display())))?;
    writeln!(file, "metric,{}", labels.join(",")).map_err(io_err("writing header"))?;
    for (i, name) in MetricRecord::COLUMNS.iter().enumerate() {
        let cells: Vec<String> = rows[i].iter().map(|c| cell(*c)).collect();
        writeln!(file, "{name},{}", cells.join(",")).map_err(io_err("writing row"))?;
    }

    Ok(Comparison {
        labels,
        rows,
        results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use firegan_core::image::ValueDomain;
    use tempfile::TempDir;

    fn gradient_image(h: usize, w: usize, seed: u64) -> ImageTensor {
        let data = (0..h * w * 3)
            .map(|i| ((i as u64 * 7 + seed * 13) % 256) as f64)
            .collect();
        ImageTensor::new(h, w, 3, ValueDomain::FileU8, data).unwrap()
    }

    /// Manifest of n pairs on disk plus a fused dir where fused == visible.
    fn self_fused_fixture(dir: &Path, n: usize) -> (PathBuf, PathBuf) {
        let fused_dir = dir.join("fused");
        fs::create_dir_all(&fused_dir).unwrap();
        let mut rows = Vec::new();
        for i in 0..n {
            let id = format!("s{i:02}");
            let visible = gradient_image(12, 12, i as u64);
            let infrared = gradient_image(12, 12, 100 + i as u64);
            let vp = dir.join(format!("{id}_rgb.png"));
            let ip = dir.join(format!("{id}_nir.png"));
            data::save_png(&vp, &visible).unwrap();
            data::save_png(&ip, &infrared).unwrap();
            data::save_png(&fused_dir.join(format!("{id}_fused.png")), &visible).unwrap();
            rows.push(ManifestRow {
                id,
                visible_path: vp,
                infrared_path: ip,
            });
        }
        let manifest = dir.join("manifest.csv");
        data::write_manifest(&manifest, &rows).unwrap();
        (manifest, fused_dir)
    }

    #[test]
    fn self_fusion_scores_perfectly_against_visible() {
        let dir = TempDir::new().unwrap();
        let (manifest, fused_dir) = self_fused_fixture(dir.path(), 4);
        let job = EvalJob {
            label: "self".into(),
            source: TripleSource::FusedDir(fused_dir),
            manifest,
            metric_params: MetricParams::default(),
            output_dir: dir.path().join("out"),
        };
        let result = run_eval(&job).unwrap();
        assert_eq!(result.fused.len(), 4);
        assert!(result.excluded.is_empty());
        let agg = result.fused_aggregate;
        assert!((agg.cc_rgb.unwrap() - 1.0).abs() < 1e-12);
        assert!((agg.ssim_rgb.unwrap() - 1.0).abs() < 1e-12);
        assert!(agg.psnr_rgb.unwrap().is_infinite());
        assert!(result.generated_ir.is_none());
        for name in ["per_item.csv", "aggregate.csv", "boxplot_summary.csv"] {
            assert!(job.output_dir.join(name).is_file(), "{name} missing");
        }
    }

    #[test]
    fn missing_fused_file_is_excluded_with_count() {
        let dir = TempDir::new().unwrap();
        let (manifest, fused_dir) = self_fused_fixture(dir.path(), 3);
        fs::remove_file(fused_dir.join("s01_fused.png")).unwrap();
        let job = EvalJob {
            label: "gap".into(),
            source: TripleSource::FusedDir(fused_dir),
            manifest,
            metric_params: MetricParams::default(),
            output_dir: dir.path().join("out"),
        };
        let result = run_eval(&job).unwrap();
        assert_eq!(result.fused.len(), 2);
        assert_eq!(result.excluded.len(), 1);
        assert_eq!(result.excluded[0].0, "s01");
    }

    #[test]
    fn identical_jobs_write_identical_csvs() {
        let dir = TempDir::new().unwrap();
        let (manifest, fused_dir) = self_fused_fixture(dir.path(), 3);
        let mk = |out: &str| EvalJob {
            label: "x".into(),
            source: TripleSource::FusedDir(fused_dir.clone()),
            manifest: manifest.clone(),
            metric_params: MetricParams::default(),
            output_dir: dir.path().join(out),
        };
        run_eval(&mk("a")).unwrap();
        run_eval(&mk("b")).unwrap();
        for name in ["per_item.csv", "aggregate.csv", "boxplot_summary.csv"] {
            let a = fs::read(dir.path().join("a").join(name)).unwrap();
            let b = fs::read(dir.path().join("b").join(name)).unwrap();
            assert_eq!(a, b, "{name} differs");
        }
    }

    #[test]
    fn comparison_has_seven_rows_and_rejects_mixed_manifests() {
        let dir = TempDir::new().unwrap();
        let (manifest, fused_dir) = self_fused_fixture(dir.path(), 3);
        let job = |label: &str, out: &str| EvalJob {
            label: label.into(),
            source: TripleSource::FusedDir(fused_dir.clone()),
            manifest: manifest.clone(),
            metric_params: MetricParams::default(),
            output_dir: dir.path().join(out),
        };
        let cmp = compare_runs(&[job("a", "oa"), job("b", "ob")], dir.path()).unwrap();
        assert_eq!(cmp.rows.len(), 7);
        assert_eq!(cmp.labels, vec!["a", "b"]);
        let text = cmp.render_text();
        assert!(text.contains("ssim_rgb"));
        assert!(text.contains("inf"));
        let csv = fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
        assert_eq!(csv.lines().count(), 8, "header + 7 metric rows");

        let other = TempDir::new().unwrap();
        let (manifest2, fused2) = self_fused_fixture(other.path(), 2);
        let bad = EvalJob {
            label: "c".into(),
            source: TripleSource::FusedDir(fused2),
            manifest: manifest2,
            metric_params: MetricParams::default(),
            output_dir: other.path().join("oc"),
        };
        assert!(matches!(
            compare_runs(&[job("a", "oa2"), bad], dir.path()),
            Err(EvalError::ManifestMismatch { .. })
        ));
    }

    #[test]
    fn five_number_summary_interpolates_quartiles() {
        let s = five_number_summary(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(s, [1.0, 1.75, 2.5, 3.25, 4.0]);
        assert_eq!(five_number_summary(&[5.0]).unwrap(), [5.0; 5]);
        assert!(five_number_summary(&[]).is_none());
        // infinities are dropped, not propagated
        let s = five_number_summary(&[1.0, f64::INFINITY, 3.0]).unwrap();
        assert_eq!(s[4], 3.0);
    }
}
