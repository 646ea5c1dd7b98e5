//! Cross-validation, metrics and report output.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{load_image, load_landmarks, DatasetManifest, Expression, ManifestEntry};
use crate::features::{extract_entry, extract_from_parts, FeatureMode, FeatureTable, FeatureView};
use crate::model::{fit_pipeline, OaoModel, PipelineConfig};
use crate::geometry::NUM_PAIRS;

pub const REPORT_SCHEMA: &str = "sention-report/1";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least 2 folds, got {0}")]
    InvalidFolds(usize),
    #[error("{k} folds requested but only {n} samples")]
    TooFewSamples { k: usize, n: usize },
    #[error("{k} folds requested but only {groups} distinct subjects")]
    TooFewGroups { k: usize, groups: usize },
    #[error("manifest row {0} has no subject")]
    MissingSubject(usize),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("fold {0}: training and held-out rows overlap")]
    Leakage(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fold index of every sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldAssignment {
    pub folds: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl FoldAssignment {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] != fold).collect()
    }
}

/// Class-stratified folds. Each class is shuffled with a ChaCha8 stream
/// seeded from `seed` and dealt round-robin, continuing where the previous
/// class stopped so fold sizes stay balanced too.
pub fn stratified_kfold(labels: &[Expression], k: usize, seed: u64) -> Result<FoldAssignment, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidFolds(k));
    }
    if k > labels.len() {
        return Err(EvalError::TooFewSamples { k, n: labels.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; labels.len()];
    let mut offset = 0;
    for class in Expression::ALL {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for (j, &i) in members.iter().enumerate() {
            folds[i] = (offset + j) % k;
        }
        offset = (offset + members.len()) % k;
    }
    Ok(FoldAssignment { folds, k, seed })
}

/// Folds that never split a group. Groups are shuffled and each goes to
/// the fold with the fewest samples so far (lowest index on ties).
pub fn group_kfold(groups: &[String], k: usize, seed: u64) -> Result<FoldAssignment, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidFolds(k));
    }
    let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for g in groups {
        *sizes.entry(g.as_str()).or_default() += 1;
    }
    if sizes.len() < k {
        return Err(EvalError::TooFewGroups { k, groups: sizes.len() });
    }
    let mut order: Vec<&str> = sizes.keys().copied().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut load = vec![0usize; k];
    let mut fold_of: BTreeMap<&str, usize> = BTreeMap::new();
    for g in order {
        let f = (0..k).min_by_key(|&f| (load[f], f)).unwrap();
        load[f] += sizes[g];
        fold_of.insert(g, f);
    }
    Ok(FoldAssignment {
        folds: groups.iter().map(|g| fold_of[g.as_str()]).collect(),
        k,
        seed,
    })
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>) -> ConfusionMatrix {
        let n = classes.len();
        ConfusionMatrix {
            classes,
            counts: vec![vec![0; n]; n],
        }
    }

    /// Empty 6x6 matrix over the expression classes.
    pub fn expressions() -> ConfusionMatrix {
        ConfusionMatrix::new(Expression::ALL.iter().map(|e| e.name().to_string()).collect())
    }

    pub fn from_counts(classes: Vec<String>, counts: Vec<Vec<u64>>) -> ConfusionMatrix {
        assert_eq!(counts.len(), classes.len());
        assert!(counts.iter().all(|r| r.len() == classes.len()));
        ConfusionMatrix { classes, counts }
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Filled by cross-validation; empty for a bare matrix.
    pub fold_accuracies: Vec<f64>,
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let n = cm.n_classes();
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let per_class: Vec<ClassMetrics> = (0..n)
        .map(|c| {
            let tp = cm.counts[c][c];
            let row: u64 = cm.counts[c].iter().sum();
            let col: u64 = cm.counts.iter().map(|r| r[c]).sum();
            let precision = ratio(tp, col);
            let recall = ratio(tp, row);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                class: cm.classes[c].clone(),
                precision,
                recall,
                f1,
                support: row,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n as f64;
    Ok(MetricsReport {
        accuracy: cm.trace() as f64 / total as f64,
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        per_class,
        fold_accuracies: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub pipeline: PipelineConfig,
    pub folds: usize,
    pub seed: u64,
    /// Keep every subject's samples in one fold.
    pub group_by_subject: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSize {
    pub iva: usize,
    pub hog: usize,
}

/// Everything a cross-validation run reports. Contains no timing, so equal
/// inputs give byte-equal serialisations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub schema: String,
    pub mode: FeatureMode,
    pub folds: usize,
    pub seed: u64,
    pub group_by_subject: bool,
    pub samples: usize,
    pub geometric_dim: usize,
    pub appearance_dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub config: PipelineConfig,
    pub metrics: MetricsReport,
    pub mask_sizes: Vec<MaskSize>,
    pub confusion: ConfusionMatrix,
}

/// Wall-clock cost of the extract and predict stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CvTiming {
    pub images: usize,
    pub extract_seconds: f64,
    pub predict_seconds: f64,
    pub fit_seconds: f64,
    pub images_per_second: f64,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub report: CvReport,
    pub predictions: Vec<Expression>,
    pub timing: CvTiming,
}

/// Fits the whole pipeline on every row of `view` outside `fold`.
pub fn fit_fold(
    view: &FeatureView,
    labels: &[Expression],
    folds: &FoldAssignment,
    fold: usize,
    config: &PipelineConfig,
) -> Result<OaoModel, crate::Error> {
    let train = folds.train_rows(fold);
    let test: BTreeSet<usize> = folds.test_rows(fold).into_iter().collect();
    if train.iter().any(|r| test.contains(r)) {
        return Err(EvalError::Leakage(fold).into());
    }
    let train_labels: Vec<Expression> = train.iter().map(|&r| labels[r]).collect();
    fit_pipeline(&view.with_rows(train), &train_labels, config)
}

struct FoldResult {
    predictions: Vec<(usize, Expression)>,
    mask: MaskSize,
    fit: Duration,
    predict: Duration,
}

/// Cross-validates on precomputed features. Folds run concurrently.
pub fn run_cv_table(
    table: &FeatureTable,
    labels: &[Expression],
    folds: &FoldAssignment,
    config: &CvConfig,
) -> Result<(CvReport, Vec<Expression>, Duration, Duration), crate::Error> {
    let mode = config.pipeline.extraction.mode;
    let view = table.view_for(mode);
    let results: Vec<Result<FoldResult, crate::Error>> = (0..folds.k)
        .into_par_iter()
        .map(|f| {
            let t0 = Instant::now();
            let model = fit_fold(&view, labels, folds, f, &config.pipeline)?;
            let fit = t0.elapsed();
            let t1 = Instant::now();
            let predictions = folds
                .test_rows(f)
                .into_iter()
                .map(|r| Ok((r, model.predict_row(&view, r)?.label)))
                .collect::<Result<Vec<_>, crate::Error>>()?;
            Ok(FoldResult {
                predictions,
                mask: MaskSize {
                    iva: model.mask.iva.len(),
                    hog: model.mask.hog.len(),
                },
                fit,
                predict: t1.elapsed(),
            })
        })
        .collect();

    let mut predicted = vec![Expression::Anger; labels.len()];
    let mut cm = ConfusionMatrix::expressions();
    let mut fold_accuracies = Vec::new();
    let mut mask_sizes = Vec::new();
    let (mut fit, mut predict) = (Duration::ZERO, Duration::ZERO);
    for r in results {
        let r = r?;
        let correct = r.predictions.iter().filter(|(i, p)| labels[*i] == *p).count();
        fold_accuracies.push(if r.predictions.is_empty() {
            0.0
        } else {
            correct as f64 / r.predictions.len() as f64
        });
        for (i, p) in r.predictions {
            predicted[i] = p;
            cm.add(labels[i].index(), p.index());
        }
        mask_sizes.push(r.mask);
        fit += r.fit;
        predict += r.predict;
    }
    let mut m = metrics(&cm)?;
    m.fold_accuracies = fold_accuracies;
    let note = (mode == FeatureMode::VectorLengths)
        .then(|| format!("geometric baseline: {NUM_PAIRS} pairwise landmark distances"));
    let report = CvReport {
        schema: REPORT_SCHEMA.to_string(),
        mode,
        folds: folds.k,
        seed: config.seed,
        group_by_subject: config.group_by_subject,
        samples: labels.len(),
        geometric_dim: view.geometric_dim(),
        appearance_dim: view.appearance_dim(),
        note,
        config: config.pipeline,
        metrics: m,
        mask_sizes,
        confusion: cm,
    };
    Ok((report, predicted, fit, predict))
}

/// Extracts every entry in parallel, in bounded batches so per-sample
/// vectors never all exist at once next to the table.
pub fn extract_table(entries: &[ManifestEntry], config: &crate::ExtractionConfig) -> Result<FeatureTable, crate::Error> {
    const BATCH: usize = 64;
    let g = config.mode.geometric_dim();
    let a = config.appearance_dim();
    let mut geometric = Array2::zeros((entries.len(), g));
    let mut appearance = Array2::zeros((entries.len(), a));
    for (b, chunk) in entries.chunks(BATCH).enumerate() {
        let samples: Vec<_> = chunk
            .par_iter()
            .map(|e| extract_entry(e, config))
            .collect::<Result<_, _>>()?;
        for (j, s) in samples.into_iter().enumerate() {
            let row = b * BATCH + j;
            geometric.row_mut(row).assign(&ndarray::aview1(&s.geometric));
            appearance.row_mut(row).assign(&ndarray::aview1(&s.appearance));
        }
    }
    Ok(FeatureTable {
        geometric,
        appearance,
    })
}

pub fn assign_folds(manifest: &DatasetManifest, config: &CvConfig) -> Result<FoldAssignment, EvalError> {
    if config.group_by_subject {
        let groups = manifest
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| e.subject.clone().ok_or(EvalError::MissingSubject(i + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        group_kfold(&groups, config.folds, config.seed)
    } else {
        stratified_kfold(&manifest.labels(), config.folds, config.seed)
    }
}

/// Full k-fold run over a manifest: extract, then fit and score each fold.
pub fn run_cv(manifest: &DatasetManifest, config: &CvConfig) -> Result<CvOutcome, crate::Error> {
    let folds = assign_folds(manifest, config)?;
    let labels = manifest.labels();
    let t0 = Instant::now();
    let table = extract_table(&manifest.entries, &config.pipeline.extraction)?;
    let extract = t0.elapsed();
    let (report, predictions, fit, predict) = run_cv_table(&table, &labels, &folds, config)?;
    let n = labels.len();
    let busy = extract.as_secs_f64() + predict.as_secs_f64();
    Ok(CvOutcome {
        report,
        predictions,
        timing: CvTiming {
            images: n,
            extract_seconds: extract.as_secs_f64(),
            predict_seconds: predict.as_secs_f64(),
            fit_seconds: fit.as_secs_f64(),
            images_per_second: if busy > 0.0 { n as f64 / busy } else { 0.0 },
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Svg,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "svg" | "svg-heatmap" => Ok(ReportFormat::Svg),
            _ => Err(format!("unknown report format `{s}` (json, csv, svg)")),
        }
    }
}

pub fn report_json(report: &CvReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serialises");
    s.push('\n');
    s
}

pub fn confusion_csv(cm: &ConfusionMatrix) -> String {
    let mut s = String::from("true\\predicted");
    for c in &cm.classes {
        s.push(',');
        s.push_str(c);
    }
    s.push('\n');
    for (name, row) in cm.classes.iter().zip(&cm.counts) {
        s.push_str(name);
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

/// Heatmap of row-normalised rates; each cell shows its count and rate.
pub fn confusion_svg(cm: &ConfusionMatrix, title: &str) -> String {
    const CELL: usize = 72;
    const LEFT: usize = 96;
    const TOP: usize = 96;
    let n = cm.n_classes();
    let (w, h) = (LEFT + n * CELL + 16, TOP + n * CELL + 40);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-size="16" text-anchor="middle">{}</text>"#,
        w / 2,
        xml_escape(title)
    );
    for (j, c) in cm.classes.iter().enumerate() {
        let x = LEFT + j * CELL + CELL / 2;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#,
            TOP - 8,
            xml_escape(c)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" fill="gray">predicted</text>"#,
        LEFT + n * CELL / 2,
        TOP - 30
    );
    for (i, (name, row)) in cm.classes.iter().zip(&cm.counts).enumerate() {
        let y = TOP + i * CELL;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            LEFT - 8,
            y + CELL / 2 + 4,
            xml_escape(name)
        );
        let total: u64 = row.iter().sum();
        for (j, &v) in row.iter().enumerate() {
            let rate = if total == 0 { 0.0 } else { v as f64 / total as f64 };
            let shade = (255.0 * (1.0 - rate)).round() as u8;
            let x = LEFT + j * CELL;
            let ink = if rate > 0.5 { "white" } else { "black" };
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="rgb({shade},{shade},255)" stroke="silver"/>"#
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{ink}">{v}</text>"#,
                x + CELL / 2,
                y + CELL / 2 - 2
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{ink}" font-size="10">{:.1}%</text>"#,
                x + CELL / 2,
                y + CELL / 2 + 14,
                100.0 * rate
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" fill="gray">true class (rows), rates normalised per row</text>"#,
        LEFT + n * CELL / 2,
        h - 12
    );
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn emit_report(report: &CvReport, format: ReportFormat, path: &Path) -> Result<(), EvalError> {
    let body = match format {
        ReportFormat::Json => report_json(report),
        ReportFormat::Csv => confusion_csv(&report.confusion),
        ReportFormat::Svg => confusion_svg(
            &report.confusion,
            &format!(
                "{} mode, {}-fold, accuracy {:.2}%",
                report.mode,
                report.folds,
                100.0 * report.metrics.accuracy
            ),
        ),
    };
    let mut f = std::fs::File::create(path)?;
    f.write_all(body.as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchReport {
    pub images: usize,
    pub single_thread_fps: f64,
    pub multi_thread_fps: f64,
    pub threads: usize,
}

/// Load, extract and classify one manifest entry with the model's own
/// extraction settings.
pub fn classify_entry(entry: &ManifestEntry, model: &OaoModel) -> Result<Expression, crate::Error> {
    let cfg = &model.config.extraction;
    let landmarks = load_landmarks(&entry.landmarks)?;
    let image = if cfg.mode.uses_appearance() {
        Some(load_image(&entry.image)?)
    } else {
        None
    };
    let features = extract_from_parts(image.as_ref(), &landmarks, cfg)?;
    Ok(model.predict_sample(&features)?.label)
}

/// Images per second over the full load, extract and predict path, first
/// on one thread and then on the current rayon pool.
pub fn bench(entries: &[ManifestEntry], model: &OaoModel) -> Result<BenchReport, crate::Error> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("single-thread pool");
    let t0 = Instant::now();
    pool.install(|| {
        entries
            .iter()
            .try_for_each(|e| classify_entry(e, model).map(|_| ()))
    })?;
    let single = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    entries
        .par_iter()
        .try_for_each(|e| classify_entry(e, model).map(|_| ()))?;
    let multi = t1.elapsed().as_secs_f64();
    let fps = |t: f64| if t > 0.0 { entries.len() as f64 / t } else { f64::INFINITY };
    Ok(BenchReport {
        images: entries.len(),
        single_thread_fps: fps(single),
        multi_thread_fps: fps(multi),
        threads: rayon::current_num_threads(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::SvmParams;
    use crate::features::ExtractionConfig;
    use crate::selection::SelectionConfig;
    use rand::Rng;

    fn labels_per_class(n: usize) -> Vec<Expression> {
        Expression::ALL.iter().flat_map(|&e| std::iter::repeat_n(e, n)).collect()
    }

    #[test]
    fn exact_stratification() {
        let labels = labels_per_class(10);
        let a = stratified_kfold(&labels, 10, 3).unwrap();
        for f in 0..10 {
            let test = a.test_rows(f);
            assert_eq!(test.len(), 6);
            let classes: BTreeSet<_> = test.iter().map(|&i| labels[i]).collect();
            assert_eq!(classes.len(), 6);
        }
        assert_eq!(a, stratified_kfold(&labels, 10, 3).unwrap());
        assert_ne!(a, stratified_kfold(&labels, 10, 4).unwrap());
    }

    #[test]
    fn small_class_spreads() {
        let mut labels = vec![Expression::Fear; 7];
        labels.extend(vec![Expression::Happy; 23]);
        let a = stratified_kfold(&labels, 10, 0).unwrap();
        let fear: BTreeSet<_> = (0..7).map(|i| a.folds[i]).collect();
        assert_eq!(fear.len(), 7);
        let mut counts = [0; 10];
        for &f in &a.folds {
            counts[f] += 1;
        }
        assert_eq!(counts.iter().max().unwrap() - counts.iter().min().unwrap(), 0);
    }

    #[test]
    fn fold_errors() {
        let labels = labels_per_class(1);
        assert!(matches!(stratified_kfold(&labels, 1, 0), Err(EvalError::InvalidFolds(1))));
        assert!(matches!(
            stratified_kfold(&labels, 7, 0),
            Err(EvalError::TooFewSamples { k: 7, n: 6 })
        ));
    }

    #[test]
    fn group_folds_keep_subjects_together() {
        let groups: Vec<String> = (0..40).map(|i| format!("S{}", i % 13)).collect();
        let a = group_kfold(&groups, 5, 1).unwrap();
        for (i, g) in groups.iter().enumerate() {
            for (j, h) in groups.iter().enumerate() {
                if g == h {
                    assert_eq!(a.folds[i], a.folds[j]);
                }
            }
        }
        assert!(matches!(group_kfold(&groups, 14, 1), Err(EvalError::TooFewGroups { .. })));
    }

    #[test]
    fn metric_arithmetic() {
        let cm = ConfusionMatrix::from_counts(vec!["a".into(), "b".into()], vec![vec![1, 1], vec![0, 2]]);
        let m = metrics(&cm).unwrap();
        assert_eq!(m.per_class[0].precision, 1.0);
        assert_eq!(m.per_class[0].recall, 0.5);
        assert!((m.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.accuracy, 0.75);

        let mut diag = ConfusionMatrix::expressions();
        for c in 0..6 {
            diag.counts[c][c] = 3;
        }
        let m = metrics(&diag).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert!(m.per_class.iter().all(|c| c.f1 == 1.0));

        let mut zero_col = ConfusionMatrix::expressions();
        zero_col.counts[0][1] = 4;
        zero_col.counts[1][1] = 1;
        let m = metrics(&zero_col).unwrap();
        assert_eq!(m.per_class[0].precision, 0.0);
        assert_eq!(m.per_class[0].f1, 0.0);
        let mean_f1 = m.per_class.iter().map(|c| c.f1).sum::<f64>() / 6.0;
        assert!((m.macro_f1 - mean_f1).abs() <= 1e-12);

        assert!(matches!(metrics(&ConfusionMatrix::expressions()), Err(EvalError::EmptyMatrix)));
    }

    #[test]
    fn csv_and_svg_shape() {
        let mut cm = ConfusionMatrix::expressions();
        cm.add(0, 0);
        cm.add(2, 4);
        let csv = confusion_csv(&cm);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0], "true\\predicted,Anger,Disgust,Fear,Happy,Sad,Surprise");
        assert_eq!(lines[3], "Fear,0,0,0,0,1,0");
        let svg = confusion_svg(&cm, "a < b & c");
        roxmltree::Document::parse(&svg).unwrap();
    }

    fn cluster_table(n_per: usize, seed: u64) -> (FeatureTable, Vec<Expression>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = labels_per_class(n_per);
        let mut g = Array2::zeros((labels.len(), 12));
        let mut a = Array2::zeros((labels.len(), 6));
        for (r, l) in labels.iter().enumerate() {
            for j in 0..12 {
                g[[r, j]] = rng.random::<f64>() + if j == l.index() { 4.0 } else { 0.0 };
            }
            for j in 0..6 {
                a[[r, j]] = rng.random::<f64>() + if j == l.index() { 4.0 } else { 0.0 };
            }
        }
        (
            FeatureTable {
                geometric: g,
                appearance: a,
            },
            labels,
        )
    }

    fn cv_config(k: usize) -> CvConfig {
        CvConfig {
            pipeline: PipelineConfig {
                extraction: ExtractionConfig::new(FeatureMode::Hybrid),
                selection: SelectionConfig::with_estimators(5),
                svm: SvmParams::default(),
            },
            folds: k,
            seed: 11,
            group_by_subject: false,
        }
    }

    #[test]
    fn cv_on_clusters_is_accurate_and_deterministic() {
        let (table, labels) = cluster_table(8, 2);
        let cfg = cv_config(4);
        let folds = stratified_kfold(&labels, 4, cfg.seed).unwrap();
        let (report, _, _, _) = run_cv_table(&table, &labels, &folds, &cfg).unwrap();
        assert_eq!(report.confusion.total(), labels.len() as u64);
        assert!(report.metrics.accuracy > 0.95, "{}", report.metrics.accuracy);
        assert_eq!(report.metrics.fold_accuracies.len(), 4);
        let (again, _, _, _) = run_cv_table(&table, &labels, &folds, &cfg).unwrap();
        assert_eq!(report_json(&report), report_json(&again));
        assert!(report_json(&report).contains("\"schema\": \"sention-report/1\""));
    }

    #[test]
    fn held_out_rows_never_reach_fitting() {
        let (table, labels) = cluster_table(6, 5);
        let cfg = cv_config(3);
        let folds = stratified_kfold(&labels, 3, 0).unwrap();
        for f in 0..3 {
            let mut poisoned = table.clone();
            for r in folds.test_rows(f) {
                poisoned.geometric.row_mut(r).fill(f64::NAN);
                poisoned.appearance.row_mut(r).fill(f64::NAN);
            }
            let view = poisoned.view_for(FeatureMode::Hybrid);
            let model = fit_fold(&view, &labels, &folds, f, &cfg.pipeline).unwrap();
            assert!(model.standardizer.mean.iter().all(|m| m.is_finite()));
            let clean = fit_fold(&table.view_for(FeatureMode::Hybrid), &labels, &folds, f, &cfg.pipeline).unwrap();
            assert_eq!(model, clean);
        }
    }

    #[test]
    fn identical_samples_do_not_crash() {
        let labels = labels_per_class(3);
        let table = FeatureTable {
            geometric: Array2::from_elem((18, 4), 0.5),
            appearance: Array2::from_elem((18, 3), 0.25),
        };
        let cfg = cv_config(3);
        let folds = stratified_kfold(&labels, 3, 0).unwrap();
        let (report, _, _, _) = run_cv_table(&table, &labels, &folds, &cfg).unwrap();
        assert_eq!(report.confusion.total(), 18);
        assert!((0.0..=1.0).contains(&report.metrics.accuracy));
    }
}
