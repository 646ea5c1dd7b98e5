//! Command-line definitions and their translation into pipeline configs.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::LevelFilter;

use sention_core::alignment::AlignConfig;
use sention_core::classifier::{Kernel, SvmParams};
use sention_core::evaluation::ReportFormat;
use sention_core::hog::HogConfig;
use sention_core::selection::SelectionConfig;
use sention_core::{ExtractionConfig, FeatureMode, PipelineConfig, Point};

#[derive(Debug, Parser)]
#[command(name = "sention", version, about = "Facial expression recognition from landmarks and face crops")]
pub struct Cli {
    /// Worker threads for extraction and fold-level parallelism (0 = all cores).
    #[arg(long, global = true, env = "SENTION_THREADS")]
    pub threads: Option<usize>,

    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Only print errors on stderr.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    pub fn log_level(&self) -> LevelFilter {
        if self.quiet {
            return LevelFilter::Error;
        }
        match self.verbose {
            0 => LevelFilter::Warn,
            1 => LevelFilter::Info,
            2 => LevelFilter::Debug,
            _ => LevelFilter::Trace,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write per-sample feature records and an index CSV.
    Extract(ExtractArgs),
    /// Select features and train the one-against-one SVM model.
    Train(TrainArgs),
    /// Classify one face; prints a JSON line with the label and votes.
    Predict(PredictArgs),
    /// Cross-validate on a manifest and write JSON, CSV and SVG reports.
    Eval(EvalArgs),
    /// Measure extract + predict throughput with a trained model.
    Bench(BenchArgs),
    /// Run an external landmark detector on one image.
    Detect(DetectArgs),
    /// Generate a synthetic six-class dataset with a manifest.
    Synth(SynthArgs),
}

/// Feature extraction settings. Unset values fall back to the defaults
/// (or, for commands that load a model, to the model's own settings).
#[derive(Debug, Clone, Default, Args)]
pub struct FeatureArgs {
    /// Descriptors to use: iva, hog, hybrid or vector_lengths [default: hybrid].
    #[arg(long)]
    pub mode: Option<FeatureMode>,

    /// Canonical eye centres in the aligned crop, as `lx,ly,rx,ry`
    /// [default: 57.6,67.2,134.4,67.2].
    #[arg(long, value_parser = parse_eyes, value_name = "LX,LY,RX,RY")]
    pub canonical_eyes: Option<(Point, Point)>,

    /// Side length of the aligned face crop in pixels [default: 192].
    #[arg(long)]
    pub face_size: Option<usize>,

    /// HOG orientation bins over [0, pi) [default: 9].
    #[arg(long)]
    pub orientations: Option<usize>,

    /// HOG cell side in pixels [default: 8].
    #[arg(long)]
    pub cell_size: Option<usize>,

    /// L2-Hys clipping threshold [default: 0.2].
    #[arg(long)]
    pub clip: Option<f64>,

    /// Pyramid up-sampling steps before HOG [default: 1].
    #[arg(long)]
    pub upscale_levels: Option<usize>,
}

fn parse_eyes(s: &str) -> Result<(Point, Point), String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [lx, ly, rx, ry] if v.iter().all(|x| x.is_finite()) => Ok((Point::new(lx, ly), Point::new(rx, ry))),
        _ => Err("expected four finite numbers: lx,ly,rx,ry".into()),
    }
}

impl FeatureArgs {
    pub fn extraction_config(&self) -> Result<ExtractionConfig> {
        let d = ExtractionConfig::new(FeatureMode::Hybrid);
        let (left_eye, right_eye) = self.canonical_eyes.unwrap_or((d.align.left_eye, d.align.right_eye));
        let cfg = ExtractionConfig {
            mode: self.mode.unwrap_or(d.mode),
            hog: HogConfig {
                orientations: self.orientations.unwrap_or(d.hog.orientations),
                cell_size: self.cell_size.unwrap_or(d.hog.cell_size),
                clip: self.clip.unwrap_or(d.hog.clip),
                upscale_levels: self.upscale_levels.unwrap_or(d.hog.upscale_levels),
                ..d.hog
            },
            align: AlignConfig {
                size: self.face_size.unwrap_or(d.align.size),
                left_eye,
                right_eye,
            },
        };
        cfg.hog.validate()?;
        if cfg.align.size == 0 {
            bail!("--face-size must be positive");
        }
        if cfg.mode.uses_appearance() && cfg.appearance_dim() == 0 {
            bail!("face crop too small for a single HOG block");
        }
        Ok(cfg)
    }

    /// Human-readable descriptions of the explicitly set flags that differ
    /// from `model`.
    pub fn conflicts_with(&self, model: &ExtractionConfig) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |flag: &str, given: Option<String>, used: String| {
            if let Some(given) = given {
                if given != used {
                    out.push(format!("--{flag} {given} differs from the model ({used})"));
                }
            }
        };
        check("mode", self.mode.map(|m| m.to_string()), model.mode.to_string());
        check(
            "canonical-eyes",
            self.canonical_eyes.map(|e| format!("{e:?}")),
            format!("{:?}", (model.align.left_eye, model.align.right_eye)),
        );
        check("face-size", self.face_size.map(|v| v.to_string()), model.align.size.to_string());
        check("orientations", self.orientations.map(|v| v.to_string()), model.hog.orientations.to_string());
        check("cell-size", self.cell_size.map(|v| v.to_string()), model.hog.cell_size.to_string());
        check("clip", self.clip.map(|v| v.to_string()), model.hog.clip.to_string());
        check(
            "upscale-levels",
            self.upscale_levels.map(|v| v.to_string()),
            model.hog.upscale_levels.to_string(),
        );
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelKind {
    Linear,
    Rbf,
}

/// Feature selection and SVM settings.
#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Maximum boosting rounds per one-against-all sub-problem.
    #[arg(long, default_value_t = 100)]
    pub estimators: usize,

    /// Features kept per sub-problem [default: same as --estimators].
    #[arg(long)]
    pub top_k: Option<usize>,

    /// Cap on candidate thresholds per feature.
    #[arg(long, default_value_t = 256)]
    pub max_thresholds: usize,

    /// SVM kernel.
    #[arg(long, value_enum, default_value_t = KernelKind::Linear)]
    pub kernel: KernelKind,

    /// RBF width [default: 1 / selected feature count].
    #[arg(long)]
    pub gamma: Option<f64>,

    /// SVM soft-margin penalty.
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,

    /// SMO stopping tolerance on the KKT gap.
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,

    /// Seed for fold assignment; recorded with the selection mask.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl PipelineArgs {
    pub fn pipeline_config(&self, features: &FeatureArgs) -> Result<PipelineConfig> {
        if self.gamma.is_some() && self.kernel == KernelKind::Linear {
            log::warn!("--gamma has no effect with the linear kernel");
        }
        let selection = SelectionConfig {
            estimators: self.estimators,
            top_k: self.top_k.unwrap_or(self.estimators),
            max_thresholds: self.max_thresholds,
            seed: self.seed,
        };
        selection.validate()?;
        let svm = SvmParams {
            kernel: match self.kernel {
                KernelKind::Linear => Kernel::Linear,
                KernelKind::Rbf => Kernel::Rbf { gamma: self.gamma },
            },
            c: self.c,
            tolerance: self.tolerance,
            ..SvmParams::default()
        };
        svm.validate()?;
        Ok(PipelineConfig {
            extraction: features.extraction_config()?,
            selection,
            svm,
        })
    }
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Dataset manifest (CSV: image, landmarks, label[, subject]).
    #[arg(long)]
    pub manifest: PathBuf,

    /// Output directory for the records and `index.csv`.
    #[arg(long)]
    pub out: PathBuf,

    /// Keep going past unreadable samples and exit 0.
    #[arg(long)]
    pub skip_bad: bool,

    #[command(flatten)]
    pub features: FeatureArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset manifest with samples of all six expressions.
    #[arg(long)]
    pub manifest: PathBuf,

    /// Where to write the model file.
    #[arg(long)]
    pub model: PathBuf,

    /// Also write the selected feature indices as JSON.
    #[arg(long)]
    pub mask_out: Option<PathBuf>,

    #[command(flatten)]
    pub features: FeatureArgs,

    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Trained model file.
    #[arg(long)]
    pub model: PathBuf,

    /// Face image (PNG, JPEG or PGM).
    #[arg(long)]
    pub image: PathBuf,

    /// 68-point landmark CSV for the image.
    #[arg(long, required_unless_present = "detector")]
    pub landmarks: Option<PathBuf>,

    /// External detector command with `{input}` and `{output}` placeholders,
    /// used when no landmark file is given.
    #[arg(long, conflicts_with = "landmarks")]
    pub detector: Option<String>,

    /// Seconds to wait for the detector.
    #[arg(long, default_value_t = 10.0)]
    pub detector_timeout: f64,

    /// Ignored in favour of the model's settings; a warning is printed for
    /// any value that disagrees.
    #[command(flatten)]
    pub features: FeatureArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset manifest with samples of all six expressions.
    #[arg(long)]
    pub manifest: PathBuf,

    /// Directory for the report files.
    #[arg(long)]
    pub out: PathBuf,

    /// Number of cross-validation folds (at least 2).
    #[arg(long, default_value_t = 10, value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(2..))]
    pub folds: usize,

    /// Keep every subject's samples in a single fold (needs a subject column).
    #[arg(long)]
    pub group_by_subject: bool,

    /// Report formats to write: json, csv, svg.
    #[arg(long, value_delimiter = ',', default_value = "json,csv,svg")]
    pub formats: Vec<ReportFormat>,

    #[command(flatten)]
    pub features: FeatureArgs,

    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Manifest whose images are classified.
    #[arg(long)]
    pub manifest: PathBuf,

    /// Trained model file.
    #[arg(long)]
    pub model: PathBuf,

    /// Use only the first N manifest entries.
    #[arg(long)]
    pub limit: Option<usize>,

    /// Ignored in favour of the model's settings; a warning is printed for
    /// any value that disagrees.
    #[command(flatten)]
    pub features: FeatureArgs,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Input image.
    #[arg(long)]
    pub image: PathBuf,

    /// Detector command with `{input}` and `{output}` placeholders.
    #[arg(long)]
    pub detector: String,

    /// Seconds to wait for the detector.
    #[arg(long, default_value_t = 10.0)]
    pub timeout: f64,

    /// Also save the landmarks as CSV here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,

    /// Samples per expression.
    #[arg(long, default_value_t = 50)]
    pub per_class: usize,

    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
