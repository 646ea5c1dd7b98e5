//! Dataset manifests, landmark and image ingestion, and the adapter for an
//! external landmark detector.
//!
//! Landmark indices are zero-based throughout: the eye corners used for
//! alignment are 36, 39 (left eye) and 42, 45 (right eye).

use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;

/// Number of landmarks in the standard 68-point annotation.
pub const NUM_LANDMARKS: usize = 68;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("{path}: parse error on line {line}: {message}")]
    ParseError {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("unknown expression label `{0}`")]
    UnknownLabel(String),
    #[error("expected 68 landmarks, found {0}")]
    WrongCount(usize),
    #[error("non-finite landmark coordinate on line {0}")]
    NonFiniteCoordinate(usize),
    #[error("could not decode image {path}: {message}")]
    DecodeError { path: PathBuf, message: String },
    #[error("unsupported image format for {0} (expected PNG, JPEG or PGM)")]
    UnsupportedFormat(PathBuf),
    #[error("landmark detector failed with exit code {code:?}: {stderr}")]
    DetectorFailed { code: Option<i32>, stderr: String },
    #[error("invalid detector command: {0}")]
    InvalidCommand(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The six basic expressions, with a fixed integer encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Expression {
    Anger,
    Disgust,
    Fear,
    Happy,
    Sad,
    Surprise,
}

impl Expression {
    pub const COUNT: usize = 6;
    pub const ALL: [Expression; 6] = [
        Expression::Anger,
        Expression::Disgust,
        Expression::Fear,
        Expression::Happy,
        Expression::Sad,
        Expression::Surprise,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Expression> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Expression::Anger => "Anger",
            Expression::Disgust => "Disgust",
            Expression::Fear => "Fear",
            Expression::Happy => "Happy",
            Expression::Sad => "Sad",
            Expression::Surprise => "Surprise",
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Expression {
    type Err = DataError;

    /// Case-insensitive, surrounding whitespace ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        Expression::ALL
            .iter()
            .copied()
            .find(|e| e.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| DataError::UnknownLabel(t.to_string()))
    }
}

/// A 2D location in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Point {
        Point { x, y }
    }

    pub fn midpoint(self, other: Point) -> Point {
        Point::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Sub for Point {
    type Output = Vec2;

    fn sub(self, rhs: Point) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Add<Vec2> for Point {
    type Output = Point;

    fn add(self, rhs: Vec2) -> Point {
        Point::new(self.x + rhs.dx, self.y + rhs.dy)
    }
}

/// Exactly 68 finite landmark positions in image space.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    points: Vec<Point>,
}

impl LandmarkSet {
    pub fn new(points: Vec<Point>) -> Result<LandmarkSet, DataError> {
        if points.len() != NUM_LANDMARKS {
            return Err(DataError::WrongCount(points.len()));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(DataError::NonFiniteCoordinate(i + 1));
        }
        Ok(LandmarkSet { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn get(&self, index: usize) -> Point {
        self.points[index]
    }

    /// Applies `f` to every point. The result must stay finite.
    pub fn map(&self, f: impl Fn(Point) -> Point) -> Result<LandmarkSet, DataError> {
        LandmarkSet::new(self.points.iter().map(|&p| f(p)).collect())
    }

    /// Writes the headerless `x,y` CSV form with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for p in &self.points {
            writeln!(out, "{:.16e},{:.16e}", p.x, p.y)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write_csv(&mut out)?;
        out.flush()
    }
}

/// Row-major luminance image with values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    /// Panics if the dimensions are zero, the buffer length is wrong, or a
    /// pixel falls outside [0, 1].
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> GrayImage {
        assert!(width >= 1 && height >= 1, "image dimensions must be positive");
        assert_eq!(pixels.len(), width * height, "pixel buffer size mismatch");
        assert!(
            pixels.iter().all(|v| (0.0..=1.0).contains(v)),
            "pixels must lie in [0, 1]"
        );
        GrayImage {
            width,
            height,
            pixels,
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> GrayImage {
        GrayImage::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> GrayImage {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        GrayImage::new(width, height, pixels)
    }

    /// Builds an image without the range check, clamping into [0, 1].
    pub(crate) fn from_raw_clamped(width: usize, height: usize, mut pixels: Vec<f64>) -> GrayImage {
        for v in &mut pixels {
            *v = v.clamp(0.0, 1.0);
        }
        GrayImage::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Saves as 8-bit binary PGM.
    pub fn save_pgm(&self, path: &Path) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self.pixels.iter().map(|v| (v * 255.0).round() as u8).collect();
        out.write_all(&bytes)?;
        out.flush()
    }

    /// Saves as 8-bit grayscale PNG.
    pub fn save_png(&self, path: &Path) -> Result<(), DataError> {
        let bytes: Vec<u8> = self.pixels.iter().map(|v| (v * 255.0).round() as u8).collect();
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer matches dimensions");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| DataError::DecodeError {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub landmarks: PathBuf,
    pub label: Expression,
    /// Optional subject identifier, used for subject-grouped folds.
    pub subject: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> Vec<Expression> {
        self.entries.iter().map(|e| e.label).collect()
    }

    /// Writes the manifest CSV. Relative paths are written as given.
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let with_subject = self.entries.iter().any(|e| e.subject.is_some());
        if with_subject {
            writeln!(out, "image,landmarks,label,subject")?;
        } else {
            writeln!(out, "image,landmarks,label")?;
        }
        for e in &self.entries {
            write!(out, "{},{},{}", e.image.display(), e.landmarks.display(), e.label)?;
            if with_subject {
                write!(out, ",{}", e.subject.as_deref().unwrap_or(""))?;
            }
            writeln!(out)?;
        }
        out.flush()
    }
}

/// Loads a manifest CSV with header `image,landmarks,label` (and an optional
/// trailing `subject` column). Lines starting with `#` are skipped. Relative
/// paths resolve against the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, DataError> {
    if !path.is_file() {
        return Err(DataError::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| DataError::ParseError {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let parse_err = |line: usize, message: String| DataError::ParseError {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let subject_col = match cols.as_slice() {
        ["image", "landmarks", "label"] => false,
        ["image", "landmarks", "label", "subject"] => true,
        _ => {
            return Err(parse_err(
                1,
                format!("expected header `image,landmarks,label`, found `{}`", cols.join(",")),
            ))
        }
    };

    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let image = &record[0];
        let landmarks = &record[1];
        if image.is_empty() || landmarks.is_empty() {
            return Err(parse_err(line, "empty path".into()));
        }
        let label: Expression = record[2].parse()?;
        let subject = if subject_col && !record[3].is_empty() {
            Some(record[3].to_string())
        } else {
            None
        };
        entries.push(ManifestEntry {
            image: base.join(image),
            landmarks: base.join(landmarks),
            label,
            subject,
        });
    }
    Ok(DatasetManifest { entries })
}

/// Parses the 68-line `x,y` landmark format. Blank trailing lines are ignored.
pub fn parse_landmarks(text: &str) -> Result<LandmarkSet, DataError> {
    let lines: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    if lines.len() != NUM_LANDMARKS {
        return Err(DataError::WrongCount(lines.len()));
    }
    let mut points = Vec::with_capacity(NUM_LANDMARKS);
    for (i, line) in lines.iter().enumerate() {
        let bad = || DataError::ParseError {
            path: PathBuf::new(),
            line: i + 1,
            message: format!("expected `x,y`, found `{line}`"),
        };
        let (xs, ys) = line.split_once(',').ok_or_else(bad)?;
        let x: f64 = xs.trim().parse().map_err(|_| bad())?;
        let y: f64 = ys.trim().parse().map_err(|_| bad())?;
        if !x.is_finite() || !y.is_finite() {
            return Err(DataError::NonFiniteCoordinate(i + 1));
        }
        points.push(Point::new(x, y));
    }
    LandmarkSet::new(points)
}

pub fn load_landmarks(path: &Path) -> Result<LandmarkSet, DataError> {
    if !path.is_file() {
        return Err(DataError::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    parse_landmarks(&text).map_err(|e| match e {
        DataError::ParseError { line, message, .. } => DataError::ParseError {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    })
}

/// Decodes a PNG, JPEG or PGM file to luminance using BT.601 weights.
pub fn load_image(path: &Path) -> Result<GrayImage, DataError> {
    if !path.is_file() {
        return Err(DataError::MissingFile(path.to_path_buf()));
    }
    let decode_err = |e: &dyn fmt::Display| DataError::DecodeError {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let reader = image::ImageReader::open(path)?
        .with_guessed_format()
        .map_err(|e| decode_err(&e))?;
    match reader.format() {
        Some(image::ImageFormat::Png | image::ImageFormat::Jpeg | image::ImageFormat::Pnm) => {}
        _ => return Err(DataError::UnsupportedFormat(path.to_path_buf())),
    }
    let img = reader.decode().map_err(|e| decode_err(&e))?;
    Ok(luminance(&img))
}

fn luminance(img: &image::DynamicImage) -> GrayImage {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels: Vec<f64> = if img.color().has_color() {
        img.to_rgb16()
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0;
                (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 65535.0
            })
            .collect()
    } else {
        img.to_luma16()
            .pixels()
            .map(|p| p.0[0] as f64 / 65535.0)
            .collect()
    };
    GrayImage::from_raw_clamped(w, h, pixels)
}

/// How to invoke an external landmark detector.
#[derive(Debug, Clone)]
pub struct DetectorCommand {
    /// Command line with `{input}` and `{output}` placeholders.
    pub template: String,
    pub timeout: Duration,
}

impl DetectorCommand {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

    pub fn new(template: impl Into<String>) -> DetectorCommand {
        DetectorCommand {
            template: template.into(),
            timeout: Self::DEFAULT_TIMEOUT,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> DetectorCommand {
        self.timeout = timeout;
        self
    }

    /// Splits the template into argv and substitutes the placeholders.
    pub fn argv(&self, input: &Path, output: &Path) -> Result<Vec<String>, DataError> {
        if !self.template.contains("{input}") || !self.template.contains("{output}") {
            return Err(DataError::InvalidCommand(
                "template must contain {input} and {output}".into(),
            ));
        }
        let words = shlex::split(&self.template)
            .ok_or_else(|| DataError::InvalidCommand(self.template.clone()))?;
        if words.is_empty() {
            return Err(DataError::InvalidCommand("empty command".into()));
        }
        let input = input.to_string_lossy();
        let output = output.to_string_lossy();
        Ok(words
            .into_iter()
            .map(|w| w.replace("{input}", &input).replace("{output}", &output))
            .collect())
    }
}

/// Runs an external detector on `image_path` and parses the landmark CSV it
/// writes to `{output}`.
pub fn detect_landmarks_external(
    image_path: &Path,
    detector: &DetectorCommand,
) -> Result<LandmarkSet, DataError> {
    let scratch = tempfile_path()?;
    let result = run_detector(image_path, &scratch, detector);
    let landmarks = result.and_then(|()| load_landmarks(&scratch));
    let _ = std::fs::remove_file(&scratch);
    landmarks
}

fn tempfile_path() -> Result<PathBuf, DataError> {
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    Ok(std::env::temp_dir().join(format!(
        "sention-landmarks-{}-{}.csv",
        std::process::id(),
        n
    )))
}

fn run_detector(input: &Path, output: &Path, detector: &DetectorCommand) -> Result<(), DataError> {
    let argv = detector.argv(input, output)?;
    let mut child = Command::new(&argv[0])
        .args(&argv[1..])
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()?;

    // Drain stderr on a helper thread so a chatty detector cannot block.
    let mut stderr = child.stderr.take().expect("stderr piped");
    let reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr.read_to_end(&mut buf);
        buf
    });

    let deadline = Instant::now() + detector.timeout;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break Some(status);
        }
        if Instant::now() >= deadline {
            let _ = child.kill();
            let _ = child.wait();
            break None;
        }
        std::thread::sleep(Duration::from_millis(5));
    };
    let stderr = reader.join().unwrap_or_default();
    let excerpt: String = String::from_utf8_lossy(&stderr).chars().take(512).collect();

    match status {
        Some(s) if s.success() => Ok(()),
        Some(s) => Err(DataError::DetectorFailed {
            code: s.code(),
            stderr: excerpt,
        }),
        None => Err(DataError::DetectorFailed {
            code: None,
            stderr: format!("timed out after {:?}", detector.timeout),
        }),
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn landmark_csv_round_trip(coords in prop::collection::vec((-1e6f64..1e6, -1e6f64..1e6), 68)) {
            let lm = LandmarkSet::new(coords.iter().map(|&(x, y)| Point::new(x, y)).collect()).unwrap();
            let mut buf = Vec::new();
            lm.write_csv(&mut buf).unwrap();
            let back = parse_landmarks(std::str::from_utf8(&buf).unwrap()).unwrap();
            prop_assert_eq!(back, lm);
        }
    }
}
