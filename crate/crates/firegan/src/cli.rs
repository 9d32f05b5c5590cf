//! Command-line entry point. Exit codes are a stable contract:
//! 0 success, 1 validation failure (config, flags, missing inputs),
//! 2 runtime abort (training divergence, callback IO, internal errors).

use std::fmt::Display;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use firegan_core::model::{fuse, generate_ir, ModelError};
use firegan_core::split::split;
use firegan_core::train::TrainState;
use firegan_core::{ImagePair, ImageTensor, MetricRecord};

use crate::checkpoint;
use crate::config::{RunConfig, RunMode};
use crate::data::{self, ManifestRow, PairingRule, SplitManifest};
use crate::evaluation::{self, Comparison, EvalJob, TripleSource};
use crate::trainer::{self, AugmentedCorpus};

#[derive(Parser)]
#[command(
    name = "firegan",
    version,
    about = "Visible/infrared image fusion: train, fine-tune, infer, evaluate"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; built-in defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the training seed (train/transfer) or split seed (make-splits).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Validate config and inputs, process a single step or item, then stop.
    #[arg(long, global = true)]
    dry_run: bool,
    /// Debug-level logging.
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train the fusion model from scratch on a paired corpus.
    Train {
        /// Overrides [paths].corpus_dir.
        #[arg(long)]
        corpus_dir: Option<PathBuf>,
        /// Overrides [paths].output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Fine-tune a checkpoint on a new domain (defaults: 3 epochs, gamma 4.5).
    Transfer {
        /// Checkpoint directory holding the pretrained networks.
        /// Falls back to [training].resume_from in the config.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        corpus_dir: Option<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Generate synthetic infrared and/or fused images from visible inputs.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory of visible images; infrared partners (pairing-rule
        /// suffix) are used for fusion when present.
        #[arg(long)]
        input_dir: PathBuf,
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = InferMode::Both)]
        mode: InferMode,
    },
    /// Score fused outputs against a corpus manifest.
    Evaluate {
        /// CSV manifest: id,visible_path,infrared_path.
        #[arg(long)]
        manifest: PathBuf,
        /// Evaluate this checkpoint's full pipeline (also scores its
        /// generated infrared).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Evaluate precomputed fused images named <id>_fused.png or <id>.png.
        #[arg(long)]
        fused_dir: Option<PathBuf>,
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long, default_value = "model")]
        label: String,
    },
    /// Evaluate several runs over one manifest and tabulate them side by side.
    Compare {
        #[arg(long)]
        manifest: PathBuf,
        /// Repeatable: LABEL=checkpoint:DIR or LABEL=fused:DIR.
        #[arg(long = "job", required = true)]
        jobs: Vec<String>,
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Split a corpus into train/val manifests.
    MakeSplits {
        #[arg(long)]
        corpus_dir: Option<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        val_count: Option<usize>,
        #[arg(long)]
        train_count: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InferMode {
    IrOnly,
    Fused,
    Both,
}

#[derive(Debug)]
enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

impl Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.message())
    }
}

fn validation(e: impl Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn runtime(e: impl Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let ok = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return if ok { 0 } else { 1 };
        }
    };
    let level = if cli.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init()
        .ok();

    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Train {
            corpus_dir,
            output_dir,
        } => cmd_train(cli, corpus_dir.clone(), output_dir.clone()),
        Command::Transfer {
            checkpoint,
            corpus_dir,
            output_dir,
        } => cmd_transfer(
            cli,
            checkpoint.clone(),
            corpus_dir.clone(),
            output_dir.clone(),
        ),
        Command::Infer {
            checkpoint,
            input_dir,
            output_dir,
            mode,
        } => cmd_infer(cli, checkpoint, input_dir, output_dir, *mode),
        Command::Evaluate {
            manifest,
            checkpoint,
            fused_dir,
            output_dir,
            label,
        } => cmd_evaluate(cli, manifest, checkpoint, fused_dir, output_dir, label),
        Command::Compare {
            manifest,
            jobs,
            output_dir,
        } => cmd_compare(cli, manifest, jobs, output_dir),
        Command::MakeSplits {
            corpus_dir,
            output_dir,
            val_count,
            train_count,
        } => cmd_make_splits(
            cli,
            corpus_dir.clone(),
            output_dir.clone(),
            *val_count,
            *train_count,
        ),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    match &cli.config {
        Some(path) => RunConfig::load(path).map_err(validation),
        None => Ok(RunConfig::default()),
    }
}

fn required_path(
    flag: Option<PathBuf>,
    from_config: &Option<PathBuf>,
    name: &str,
) -> Result<PathBuf, CliError> {
    flag.or_else(|| from_config.clone()).ok_or_else(|| {
        validation(format!(
            "{name} required: pass --{name} or set it under [paths] in the config"
        ))
    })
}

/// Loads the training pool and validation set: from explicit manifests
/// when the config names them, otherwise by splitting the corpus
/// directory. Everything is resized to the configured resolution.
fn load_train_val(
    cfg: &RunConfig,
    corpus_dir: &Path,
) -> Result<(Vec<ImagePair>, Vec<ImagePair>), CliError> {
    let rule = cfg.pairing_rule();
    let target = (cfg.data.target_height, cfg.data.target_width);
    if let (Some(tm), Some(vm)) = (&cfg.paths.train_manifest, &cfg.paths.val_manifest) {
        let resize_all = |pairs: Vec<ImagePair>| -> Result<Vec<ImagePair>, CliError> {
            pairs
                .iter()
                .map(|p| data::resize_pair(p, target.0, target.1).map_err(validation))
                .collect()
        };
        let train = resize_all(data::load_manifest_pairs(tm).map_err(validation)?)?;
        let val = resize_all(data::load_manifest_pairs(vm).map_err(validation)?)?;
        Ok((train, val))
    } else {
        let corpus =
            data::load_corpus_cached(corpus_dir, &rule, Some(target)).map_err(validation)?;
        split(&corpus, &cfg.split_spec()).map_err(validation)
    }
}

/// Writes the fully resolved configuration beside the run's outputs,
/// baking in the effective paths so the echo alone reproduces the run.
fn echo_config(
    cfg: &RunConfig,
    mode: RunMode,
    cli: &Cli,
    out_dir: &Path,
    corpus_dir: Option<&Path>,
    checkpoint: Option<&Path>,
) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| runtime(format!("creating {}: {e}", out_dir.display())))?;
    let path = out_dir.join("config_echo.toml");
    let mut resolved = cfg.resolved(mode, cli.seed);
    resolved.paths.output_dir = Some(out_dir.to_path_buf());
    if let Some(dir) = corpus_dir {
        resolved.paths.corpus_dir = Some(dir.to_path_buf());
    }
    if let Some(ckpt) = checkpoint {
        resolved.training.resume_from = Some(ckpt.display().to_string());
    }
    resolved.echo_to(&path).map_err(runtime)?;
    log::debug!("config echoed to {}", path.display());
    Ok(())
}

fn cmd_train(
    cli: &Cli,
    corpus_dir: Option<PathBuf>,
    output_dir: Option<PathBuf>,
) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    cfg.validate(RunMode::Train).map_err(validation)?;
    let corpus_dir = required_path(corpus_dir, &cfg.paths.corpus_dir, "corpus-dir")?;
    let output_dir = required_path(output_dir, &cfg.paths.output_dir, "output-dir")?;

    let mut tc = cfg.training_config(RunMode::Train);
    if let Some(seed) = cli.seed {
        tc.seed = seed;
    }
    let specs = cfg.network_specs().map_err(validation)?;
    let (train_pool, val) = load_train_val(&cfg, &corpus_dir)?;
    let aug_target = if cfg.data.augmented_target > 0 {
        cfg.data.augmented_target
    } else {
        cfg.split_spec().augmented_target(train_pool.len())
    };
    println!(
        "train: {} -> {} | pool {} (augmented to {}), val {} | epochs {}, batch {}, gamma {}, seed {}",
        corpus_dir.display(),
        output_dir.display(),
        train_pool.len(),
        aug_target,
        val.len(),
        tc.epochs,
        tc.batch_size,
        tc.weights.gamma,
        tc.seed
    );
    echo_config(
        &cfg,
        RunMode::Train,
        cli,
        &output_dir,
        Some(&corpus_dir),
        None,
    )?;

    let train_data = AugmentedCorpus::build(train_pool, aug_target, tc.seed);
    let out = trainer::fit(
        &train_data,
        &val,
        specs,
        &tc,
        &cfg.metric_params(),
        &output_dir,
        cli.dry_run.then_some(1),
    )
    .map_err(runtime)?;
    println!("final checkpoint: {}", out.final_checkpoint.display());
    Ok(())
}

fn cmd_transfer(
    cli: &Cli,
    checkpoint_dir: Option<PathBuf>,
    corpus_dir: Option<PathBuf>,
    output_dir: Option<PathBuf>,
) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    cfg.validate(RunMode::Transfer).map_err(validation)?;
    let corpus_dir = required_path(corpus_dir, &cfg.paths.corpus_dir, "corpus-dir")?;
    let output_dir = required_path(output_dir, &cfg.paths.output_dir, "output-dir")?;
    let checkpoint_dir = checkpoint_dir
        .or_else(|| cfg.training.resume_from.as_ref().map(PathBuf::from))
        .ok_or_else(|| {
            validation(
                "checkpoint required: pass --checkpoint or set [training].resume_from in the config",
            )
        })?;

    let (state, _) = checkpoint::load(&checkpoint_dir).map_err(validation)?;
    let mut tc = cfg.training_config(RunMode::Transfer);
    if let Some(seed) = cli.seed {
        tc.seed = seed;
    }
    let (train_pool, val) = load_train_val(&cfg, &corpus_dir)?;
    let aug_target = if cfg.data.augmented_target > 0 {
        cfg.data.augmented_target
    } else {
        cfg.split_spec().augmented_target(train_pool.len())
    };
    println!(
        "transfer: {} + {} -> {} | gamma {}, epochs {}, batch {}, lr ({}, {}), seed {}",
        checkpoint_dir.display(),
        corpus_dir.display(),
        output_dir.display(),
        tc.weights.gamma,
        tc.epochs,
        tc.batch_size,
        tc.lr_generators,
        tc.lr_discriminators,
        tc.seed
    );
    echo_config(
        &cfg,
        RunMode::Transfer,
        cli,
        &output_dir,
        Some(&corpus_dir),
        Some(&checkpoint_dir),
    )?;

    let train_data = AugmentedCorpus::build(train_pool, aug_target, tc.seed);
    let out = trainer::transfer_learn(
        state,
        &train_data,
        &val,
        &tc,
        &cfg.metric_params(),
        &output_dir,
        cli.dry_run.then_some(1),
    )
    .map_err(runtime)?;
    println!("final checkpoint: {}", out.final_checkpoint.display());
    Ok(())
}

/// One inference input: a visible image and, when the pairing rule finds
/// one, its real infrared partner.
struct InferItem {
    id: String,
    visible: PathBuf,
    infrared: Option<PathBuf>,
}

/// Unlike a corpus scan, inference accepts lone visible images: anything
/// not carrying the infrared suffix is an input, and an infrared partner
/// is attached when present.
fn scan_infer_inputs(dir: &Path, rule: &PairingRule) -> Result<Vec<InferItem>, CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| validation(format!("reading {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();

    let stem = |p: &Path| p.file_stem().and_then(|s| s.to_str()).map(String::from);
    let mut items = Vec::new();
    for path in &files {
        let Some(s) = stem(path) else { continue };
        if !data::EXTENSIONS.iter().any(|e| {
            path.extension()
                .and_then(|x| x.to_str())
                .map(str::to_ascii_lowercase)
                == Some((*e).to_string())
        }) {
            continue;
        }
        if s.ends_with(&rule.infrared_suffix) {
            continue;
        }
        let id = s
            .strip_suffix(&rule.visible_suffix)
            .unwrap_or(&s)
            .to_string();
        let infrared = files
            .iter()
            .find(|p| stem(p).as_deref() == Some(&format!("{id}{}", rule.infrared_suffix)))
            .cloned();
        items.push(InferItem {
            id,
            visible: path.clone(),
            infrared,
        });
    }
    Ok(items)
}

fn cmd_infer(
    cli: &Cli,
    checkpoint_dir: &Path,
    input_dir: &Path,
    output_dir: &Path,
    mode: InferMode,
) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let rule = cfg.pairing_rule();
    let (mut state, _) = checkpoint::load(checkpoint_dir).map_err(validation)?;
    let items = scan_infer_inputs(input_dir, &rule)?;
    if items.is_empty() {
        log::warn!(
            "{} holds no input images; nothing to do",
            input_dir.display()
        );
        return Ok(());
    }
    std::fs::create_dir_all(output_dir)
        .map_err(|e| runtime(format!("creating {}: {e}", output_dir.display())))?;

    let mut written = 0usize;
    let mut skipped = 0usize;
    for item in items.iter().take(if cli.dry_run { 1 } else { usize::MAX }) {
        match infer_one(&mut state, item, output_dir, mode) {
            Ok(n) => written += n,
            Err(e) => {
                skipped += 1;
                log::warn!("{} skipped: {e}", item.id);
            }
        }
    }
    println!(
        "wrote {written} files to {} ({skipped} inputs skipped)",
        output_dir.display()
    );
    Ok(())
}

fn infer_one(
    state: &mut TrainState,
    item: &InferItem,
    output_dir: &Path,
    mode: InferMode,
) -> Result<usize, CliError> {
    let visible = data::load_image(&item.visible).map_err(runtime)?;
    let visible = if visible.channels() == 1 {
        visible.replicate_to_3()
    } else {
        visible
    };
    let visible_m = visible.to_model_domain().map_err(runtime)?;
    let real_ir_m = item
        .infrared
        .as_ref()
        .map(|p| -> Result<ImageTensor, CliError> {
            let ir = data::load_image(p).map_err(runtime)?;
            let ir = if ir.channels() == 1 {
                ir.replicate_to_3()
            } else {
                ir
            };
            ir.to_model_domain().map_err(runtime)
        })
        .transpose()?;

    // generated IR is needed for ir-only/both outputs and as the fusion
    // partner when no real infrared exists
    let needs_g1 = mode != InferMode::Fused || real_ir_m.is_none();
    let gen_ir = if needs_g1 {
        Some(generate_ir(&mut state.g1, &visible_m).map_err(skip_or_runtime)?)
    } else {
        None
    };

    let mut written = 0;
    if matches!(mode, InferMode::IrOnly | InferMode::Both) {
        let out = gen_ir
            .as_ref()
            .unwrap()
            .from_model_domain()
            .map_err(runtime)?;
        data::save_png(&output_dir.join(format!("{}_genir.png", item.id)), &out)
            .map_err(runtime)?;
        written += 1;
    }
    if matches!(mode, InferMode::Fused | InferMode::Both) {
        let partner = real_ir_m.as_ref().or(gen_ir.as_ref()).unwrap();
        let fused = fuse(&mut state.g2, &visible_m, partner).map_err(skip_or_runtime)?;
        let out = fused.from_model_domain().map_err(runtime)?;
        data::save_png(&output_dir.join(format!("{}_fused.png", item.id)), &out)
            .map_err(runtime)?;
        written += 1;
    }
    Ok(written)
}

/// Size problems (indivisible inputs) are per-file skips, not aborts.
fn skip_or_runtime(e: ModelError) -> CliError {
    match e {
        ModelError::Indivisible { .. } | ModelError::DimensionMismatch { .. } => validation(e),
        other => runtime(other),
    }
}

fn single_column(label: &str, record: &MetricRecord) -> String {
    Comparison {
        labels: vec![label.to_string()],
        rows: record.cells().iter().map(|c| vec![*c]).collect(),
        results: vec![],
    }
    .render_text()
}

fn fmt_cell(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_infinite() => "inf".into(),
        Some(x) => format!("{x:.4}"),
        None => "-".into(),
    }
}

fn classify_eval(e: evaluation::EvalError) -> CliError {
    use evaluation::EvalError::*;
    match e {
        Data(_) | Checkpoint(_) | ManifestMismatch { .. } | NoJobs => validation(e),
        other => runtime(other),
    }
}

fn cmd_evaluate(
    cli: &Cli,
    manifest: &Path,
    checkpoint_dir: &Option<PathBuf>,
    fused_dir: &Option<PathBuf>,
    output_dir: &Path,
    label: &str,
) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let source = match (checkpoint_dir, fused_dir) {
        (Some(c), None) => TripleSource::Checkpoint(c.clone()),
        (None, Some(f)) => TripleSource::FusedDir(f.clone()),
        _ => {
            return Err(validation(
                "exactly one of --checkpoint or --fused-dir must be given",
            ))
        }
    };
    if cli.dry_run {
        let rows = data::read_manifest(manifest).map_err(validation)?;
        println!("dry run: manifest lists {} items", rows.len());
        return Ok(());
    }
    echo_config(&cfg, RunMode::Train, cli, output_dir, None, None)?;
    let job = EvalJob {
        label: label.to_string(),
        source,
        manifest: manifest.to_path_buf(),
        metric_params: cfg.metric_params(),
        output_dir: output_dir.to_path_buf(),
    };
    let result = evaluation::run_eval(&job).map_err(classify_eval)?;

    if let Some(agg) = &result.generated_ir_aggregate {
        println!(
            "generated IR vs real IR ({} items): EN {}  CC {}  PSNR {}  SSIM {}",
            result.generated_ir.as_ref().map(Vec::len).unwrap_or(0),
            fmt_cell(agg.en),
            fmt_cell(agg.cc_ir),
            fmt_cell(agg.psnr_ir),
            fmt_cell(agg.ssim_ir),
        );
    }
    println!(
        "fused-image aggregate over {} items ({} excluded):",
        result.fused.len(),
        result.excluded.len()
    );
    print!("{}", single_column(label, &result.fused_aggregate));
    println!("reports under {}", output_dir.display());
    Ok(())
}

fn parse_job(
    text: &str,
    manifest: &Path,
    params: &firegan_core::MetricParams,
    output_root: &Path,
) -> Result<EvalJob, CliError> {
    let bad = || {
        validation(format!(
            "job {text:?} must look like LABEL=checkpoint:DIR or LABEL=fused:DIR"
        ))
    };
    let (label, rest) = text.split_once('=').ok_or_else(bad)?;
    let (kind, path) = rest.split_once(':').ok_or_else(bad)?;
    let source = match kind {
        "checkpoint" => TripleSource::Checkpoint(PathBuf::from(path)),
        "fused" => TripleSource::FusedDir(PathBuf::from(path)),
        _ => return Err(bad()),
    };
    if label.is_empty() || path.is_empty() {
        return Err(bad());
    }
    Ok(EvalJob {
        label: label.to_string(),
        source,
        manifest: manifest.to_path_buf(),
        metric_params: *params,
        output_dir: output_root.join(label),
    })
}

fn cmd_compare(
    cli: &Cli,
    manifest: &Path,
    jobs: &[String],
    output_dir: &Path,
) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let params = cfg.metric_params();
    let jobs: Vec<EvalJob> = jobs
        .iter()
        .map(|t| parse_job(t, manifest, &params, output_dir))
        .collect::<Result<_, _>>()?;
    if cli.dry_run {
        let rows = data::read_manifest(manifest).map_err(validation)?;
        println!(
            "dry run: {} jobs over {} manifest items",
            jobs.len(),
            rows.len()
        );
        return Ok(());
    }
    echo_config(&cfg, RunMode::Train, cli, output_dir, None, None)?;
    let comparison = evaluation::compare_runs(&jobs, output_dir).map_err(classify_eval)?;
    print!("{}", comparison.render_text());
    for result in &comparison.results {
        if !result.excluded.is_empty() {
            println!("{}: {} items excluded", result.label, result.excluded.len());
        }
    }
    println!("comparison.csv under {}", output_dir.display());
    Ok(())
}

fn cmd_make_splits(
    cli: &Cli,
    corpus_dir: Option<PathBuf>,
    output_dir: Option<PathBuf>,
    val_count: Option<usize>,
    train_count: Option<usize>,
) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let corpus_dir = required_path(corpus_dir, &cfg.paths.corpus_dir, "corpus-dir")?;
    let output_dir = required_path(output_dir, &cfg.paths.output_dir, "output-dir")?;
    let rule = cfg.pairing_rule();

    let mut spec = cfg.split_spec();
    if let Some(v) = val_count {
        spec.val_count = v;
    }
    if let Some(t) = train_count {
        spec.train_count = t;
    }
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }

    let corpus = data::load_corpus(&corpus_dir, &rule).map_err(validation)?;
    let (train, val) = split(&corpus, &spec).map_err(validation)?;
    println!(
        "{} pairs -> train {} / val {} (seed {})",
        corpus.len(),
        train.len(),
        val.len(),
        spec.seed
    );
    if cli.dry_run {
        return Ok(());
    }

    std::fs::create_dir_all(&output_dir)
        .map_err(|e| runtime(format!("creating {}: {e}", output_dir.display())))?;
    let paths: std::collections::BTreeMap<String, (PathBuf, PathBuf)> =
        data::scan_corpus(&corpus_dir, &rule)
            .map_err(validation)?
            .into_iter()
            .map(|(id, v, i)| (id, (v, i)))
            .collect();
    let rows = |pairs: &[ImagePair]| -> Vec<ManifestRow> {
        pairs
            .iter()
            .map(|p| {
                let (v, i) = &paths[&p.id];
                ManifestRow {
                    id: p.id.clone(),
                    visible_path: v.clone(),
                    infrared_path: i.clone(),
                }
            })
            .collect()
    };
    data::write_manifest(&output_dir.join("train_manifest.csv"), &rows(&train)).map_err(runtime)?;
    data::write_manifest(&output_dir.join("val_manifest.csv"), &rows(&val)).map_err(runtime)?;
    data::write_split_manifest(
        &output_dir.join("splits.json"),
        &SplitManifest {
            seed: spec.seed,
            train: train.iter().map(|p| p.id.clone()).collect(),
            val: val.iter().map(|p| p.id.clone()).collect(),
        },
    )
    .map_err(runtime)?;
    println!("manifests under {}", output_dir.display());
    Ok(())
}
