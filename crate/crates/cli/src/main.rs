//! `sention`: batch command-line frontend for the expression pipeline.
//!
//! Machine-readable results go to stdout as JSON lines; progress, warnings
//! and human-readable tables go to stderr.

mod args;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::Parser;
use log::{info, warn};
use rayon::prelude::*;
use serde_json::json;

use args::{BenchArgs, Cli, Command, DetectArgs, EvalArgs, ExtractArgs, PredictArgs, SynthArgs, TrainArgs};
use sention_core::data::{load_image, load_landmarks, load_manifest, DetectorCommand, ManifestEntry};
use sention_core::evaluation::{self, emit_report, extract_table, run_cv, CvConfig, CvReport, ReportFormat};
use sention_core::features::{extract_entry, extract_from_parts};
use sention_core::records::{self, DISTANCE_MAGIC, HOG_MAGIC, IVA_MAGIC};
use sention_core::selection::{MaskFile, SelectionError};
use sention_core::{load_model, save_model, synthetic, Expression, FeatureMode, OaoModel};

fn main() {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level())
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads.filter(|&n| n > 0) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Extract(a) => cmd_extract(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn emit(value: serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{value}")?;
    Ok(())
}

fn cmd_extract(a: ExtractArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let config = a.features.extraction_config()?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;

    let failed = AtomicUsize::new(0);
    let rows: Vec<Option<String>> = manifest
        .entries
        .par_iter()
        .enumerate()
        .map(|(i, entry)| match extract_one(i, entry, &config, &a.out) {
            Ok(row) => Some(row),
            Err(e) => {
                failed.fetch_add(1, Ordering::Relaxed);
                warn!("sample {i} ({}): {e:#}", entry.image.display());
                None
            }
        })
        .collect();
    let failed = failed.into_inner();
    let written = rows.iter().flatten().count();

    let mut index = String::from("sample,label,geometric,appearance\n");
    for row in rows.iter().flatten() {
        index.push_str(row);
        index.push('\n');
    }
    fs::write(a.out.join("index.csv"), index)?;

    emit(json!({
        "command": "extract",
        "mode": config.mode.name(),
        "samples": manifest.len(),
        "written": written,
        "failed": failed,
        "index": a.out.join("index.csv"),
    }))?;
    if failed > 0 {
        if a.skip_bad {
            warn!("{failed} sample(s) skipped");
        } else {
            bail!("{failed} sample(s) failed; rerun with --skip-bad to keep the rest");
        }
    }
    Ok(())
}

/// Writes the records for one entry and returns its index row.
fn extract_one(i: usize, entry: &ManifestEntry, config: &sention_core::ExtractionConfig, out: &Path) -> Result<String> {
    let features = extract_entry(entry, config)?;
    let stem = entry
        .image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = format!("{i:05}_{stem}");
    let mut files = [String::new(), String::new()];
    if !features.geometric.is_empty() {
        let (ext, magic) = if config.mode == FeatureMode::VectorLengths {
            ("vlen", DISTANCE_MAGIC)
        } else {
            ("iva", IVA_MAGIC)
        };
        files[0] = format!("{name}.{ext}");
        records::save_record(&out.join(&files[0]), magic, &features.geometric)?;
    }
    if !features.appearance.is_empty() {
        files[1] = format!("{name}.hog");
        records::save_record(&out.join(&files[1]), HOG_MAGIC, &features.appearance)?;
    }
    Ok(format!("{name},{},{},{}", entry.label, files[0], files[1]))
}

fn require_all_classes(labels: &[Expression]) -> Result<()> {
    for class in Expression::ALL {
        if !labels.contains(&class) {
            return Err(SelectionError::MissingClass(class).into());
        }
    }
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let labels = manifest.labels();
    require_all_classes(&labels)?;
    let config = a.pipeline.pipeline_config(&a.features)?;

    let t = Instant::now();
    let table = extract_table(&manifest.entries, &config.extraction)?;
    info!("extracted {} samples in {:.1?}", manifest.len(), t.elapsed());
    let t = Instant::now();
    let model = sention_core::model::fit_pipeline(&table.view_for(config.extraction.mode), &labels, &config)?;
    info!("fitted model in {:.1?}", t.elapsed());
    save_model(&model, &a.model)?;
    if let Some(path) = &a.mask_out {
        let mask = MaskFile::new(&model.mask, &config.selection);
        fs::write(path, serde_json::to_string_pretty(&mask)? + "\n")?;
    }
    emit(json!({
        "command": "train",
        "model": a.model,
        "mode": config.extraction.mode.name(),
        "samples": manifest.len(),
        "machines": model.ensemble.machines.len(),
        "mask_geometric": model.mask.iva.len(),
        "mask_appearance": model.mask.hog.len(),
    }))
}

/// Warns about every feature flag that disagrees with the model's own
/// configuration; the model's values are used regardless.
fn warn_on_drift(model: &OaoModel, flags: &args::FeatureArgs) {
    for conflict in flags.conflicts_with(&model.config.extraction) {
        warn!("{conflict}; using the model's setting");
    }
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    warn_on_drift(&model, &a.features);
    let cfg = &model.config.extraction;

    let t = Instant::now();
    let landmarks = match (&a.landmarks, &a.detector) {
        (Some(path), _) => load_landmarks(path)?,
        (None, Some(cmd)) => {
            let det = DetectorCommand::new(cmd.clone()).with_timeout(Duration::from_secs_f64(a.detector_timeout));
            sention_core::data::detect_landmarks_external(&a.image, &det)?
        }
        (None, None) => bail!("either --landmarks or --detector is required"),
    };
    let image = if cfg.mode.uses_appearance() {
        Some(load_image(&a.image)?)
    } else {
        None
    };
    let features = extract_from_parts(image.as_ref(), &landmarks, cfg)?;
    let prediction = model.predict_sample(&features)?;
    let ms = t.elapsed().as_secs_f64() * 1e3;

    let votes: serde_json::Map<String, serde_json::Value> = Expression::ALL
        .iter()
        .map(|e| (e.name().to_string(), json!(prediction.votes[e.index()])))
        .collect();
    emit(json!({ "label": prediction.label.name(), "votes": votes, "ms": ms }))
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    require_all_classes(&manifest.labels())?;
    let config = CvConfig {
        pipeline: a.pipeline.pipeline_config(&a.features)?,
        folds: a.folds,
        seed: a.pipeline.seed,
        group_by_subject: a.group_by_subject,
    };
    let outcome = run_cv(&manifest, &config)?;
    let report = &outcome.report;

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut written = Vec::new();
    for format in &a.formats {
        let path = a.out.join(match format {
            ReportFormat::Json => "report.json",
            ReportFormat::Csv => "confusion.csv",
            ReportFormat::Svg => "confusion.svg",
        });
        emit_report(report, *format, &path)?;
        written.push(path);
    }
    print_summary(report);
    emit(json!({
        "command": "eval",
        "mode": report.mode.name(),
        "folds": report.folds,
        "samples": report.samples,
        "accuracy": report.metrics.accuracy,
        "macro_f1": report.metrics.macro_f1,
        "images_per_second": outcome.timing.images_per_second,
        "fit_seconds": outcome.timing.fit_seconds,
        "note": report.note,
        "outputs": written,
    }))
}

fn print_summary(report: &CvReport) {
    let m = &report.metrics;
    eprintln!(
        "{} / {}-fold / {} samples: accuracy {:.2}%",
        report.mode,
        report.folds,
        report.samples,
        100.0 * m.accuracy
    );
    eprintln!("{:<10} {:>9} {:>9} {:>9} {:>8}", "class", "precision", "recall", "f1", "support");
    for c in &m.per_class {
        eprintln!(
            "{:<10} {:>9.4} {:>9.4} {:>9.4} {:>8}",
            c.class, c.precision, c.recall, c.f1, c.support
        );
    }
    eprintln!(
        "{:<10} {:>9.4} {:>9.4} {:>9.4}",
        "macro", m.macro_precision, m.macro_recall, m.macro_f1
    );
    if let Some(note) = &report.note {
        eprintln!("note: {note}");
    }
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    warn_on_drift(&model, &a.features);
    let manifest = load_manifest(&a.manifest)?;
    let n = a.limit.map_or(manifest.len(), |l| l.min(manifest.len()));
    if n == 0 {
        bail!("manifest has no entries");
    }
    let entries = &manifest.entries[..n];
    let report = evaluation::bench(entries, &model)?;
    eprintln!(
        "{} images: {:.1} images/s on 1 thread, {:.1} images/s on {} threads",
        report.images, report.single_thread_fps, report.multi_thread_fps, report.threads
    );
    if report.threads > 1 && report.single_thread_fps > report.multi_thread_fps {
        warn!("single-threaded run was faster than the {}-thread run", report.threads);
    }
    emit(json!({
        "command": "bench",
        "images": report.images,
        "single_thread_fps": report.single_thread_fps,
        "multi_thread_fps": report.multi_thread_fps,
        "threads": report.threads,
    }))
}

fn cmd_detect(a: DetectArgs) -> Result<()> {
    let det = DetectorCommand::new(a.detector).with_timeout(Duration::from_secs_f64(a.timeout));
    let landmarks = sention_core::data::detect_landmarks_external(&a.image, &det)?;
    if let Some(path) = &a.out {
        landmarks.save(path)?;
    }
    let points: Vec<[f64; 2]> = landmarks.points().iter().map(|p| [p.x, p.y]).collect();
    emit(json!({ "image": a.image, "landmarks": points }))
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let manifest = synthetic::write_dataset(&a.out, a.per_class, a.seed)?;
    let path: PathBuf = a.out.join("manifest.csv");
    emit(json!({
        "command": "synth",
        "manifest": path,
        "samples": manifest.len(),
        "seed": a.seed,
    }))
}
