//! Synthetic expression data for tests, demos and benchmarks.
//!
//! Every class is a fixed smooth displacement field applied to one neutral
//! 68-point template. A sample adds isotropic Gaussian jitter with standard
//! deviation [`JITTER_FRACTION`] times the deformation magnitude, then a
//! mild random similarity transform. Images are 256x256 renderings of the
//! landmark polylines as soft dark strokes over a shaded face blob.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::alignment::SimilarityTransform;
use crate::data::{DatasetManifest, Expression, GrayImage, LandmarkSet, ManifestEntry, Point};

pub const IMAGE_SIZE: usize = 256;
/// Largest landmark displacement of any class deformation, in pixels.
pub const DEFORMATION_MAGNITUDE: f64 = 8.0;
pub const JITTER_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub label: Expression,
    pub landmarks: LandmarkSet,
    pub image: GrayImage,
}

/// Neutral face in a 256x256 frame; eye centres at (92, 104) and (164, 104).
pub fn template() -> Vec<Point> {
    let mut p = Vec::with_capacity(68);
    for i in 0..17 {
        let t = std::f64::consts::PI * i as f64 / 16.0;
        p.push(Point::new(128.0 - 70.0 * t.cos(), 110.0 + 105.0 * t.sin()));
    }
    for j in 0..5 {
        let arch = 6.0 * (std::f64::consts::PI * j as f64 / 4.0).sin();
        p.push(Point::new(70.0 + 11.25 * j as f64, 88.0 - arch));
    }
    for j in 0..5 {
        let arch = 6.0 * (std::f64::consts::PI * j as f64 / 4.0).sin();
        p.push(Point::new(141.0 + 11.25 * j as f64, 88.0 - arch));
    }
    for y in [100.0, 112.0, 124.0, 136.0] {
        p.push(Point::new(128.0, y));
    }
    for (x, y) in [(112.0, 146.0), (120.0, 149.0), (128.0, 151.0), (136.0, 149.0), (144.0, 146.0)] {
        p.push(Point::new(x, y));
    }
    for cx in [92.0, 164.0] {
        for (dx, dy) in [(-14.0, 0.0), (-5.0, -6.0), (5.0, -6.0), (14.0, 0.0), (5.0, 6.0), (-5.0, 6.0)] {
            p.push(Point::new(cx + dx, 104.0 + dy));
        }
    }
    let mouth = [
        (100.0, 176.0),
        (108.0, 170.0),
        (118.0, 166.0),
        (128.0, 168.0),
        (138.0, 166.0),
        (148.0, 170.0),
        (156.0, 176.0),
        (148.0, 183.0),
        (138.0, 187.0),
        (128.0, 188.0),
        (118.0, 187.0),
        (108.0, 183.0),
        (104.0, 176.0),
        (118.0, 172.0),
        (128.0, 173.0),
        (138.0, 172.0),
        (152.0, 176.0),
        (138.0, 179.0),
        (128.0, 180.0),
        (118.0, 179.0),
    ];
    p.extend(mouth.iter().map(|&(x, y)| Point::new(x, y)));
    p
}

/// Gaussian bump of displacement `(dx, dy)` centred at `(x, y)`.
struct Bump {
    x: f64,
    y: f64,
    dx: f64,
    dy: f64,
    radius: f64,
}

const fn bump(x: f64, y: f64, dx: f64, dy: f64, radius: f64) -> Bump {
    Bump { x, y, dx, dy, radius }
}

fn bumps(class: Expression) -> Vec<Bump> {
    match class {
        Expression::Anger => vec![
            bump(105.0, 86.0, 5.0, 6.0, 12.0),
            bump(151.0, 86.0, -5.0, 6.0, 12.0),
            bump(128.0, 168.0, 0.0, 3.0, 10.0),
            bump(128.0, 186.0, 0.0, -4.0, 10.0),
        ],
        Expression::Disgust => vec![
            bump(128.0, 168.0, 0.0, -7.0, 14.0),
            bump(128.0, 149.0, 0.0, -4.0, 10.0),
            bump(108.0, 88.0, 2.0, 3.0, 10.0),
            bump(148.0, 88.0, -2.0, 3.0, 10.0),
        ],
        Expression::Fear => vec![
            bump(105.0, 86.0, 3.0, -5.0, 12.0),
            bump(151.0, 86.0, -3.0, -5.0, 12.0),
            bump(100.0, 176.0, -7.0, 1.0, 10.0),
            bump(156.0, 176.0, 7.0, 1.0, 10.0),
        ],
        Expression::Happy => vec![
            bump(100.0, 176.0, -4.0, -7.0, 10.0),
            bump(156.0, 176.0, 4.0, -7.0, 10.0),
            bump(92.0, 110.0, 0.0, -2.0, 8.0),
            bump(164.0, 110.0, 0.0, -2.0, 8.0),
        ],
        Expression::Sad => vec![
            bump(100.0, 176.0, 1.0, 7.0, 10.0),
            bump(156.0, 176.0, -1.0, 7.0, 10.0),
            bump(112.0, 85.0, 0.0, -6.0, 8.0),
            bump(144.0, 85.0, 0.0, -6.0, 8.0),
        ],
        Expression::Surprise => vec![
            bump(92.0, 84.0, 0.0, -7.0, 20.0),
            bump(164.0, 84.0, 0.0, -7.0, 20.0),
            bump(128.0, 195.0, 0.0, 8.0, 18.0),
        ],
    }
}

/// Per-landmark displacement of `class`, scaled so the largest has norm
/// [`DEFORMATION_MAGNITUDE`].
pub fn class_deformation(class: Expression) -> Vec<(f64, f64)> {
    let bumps = bumps(class);
    let raw: Vec<(f64, f64)> = template()
        .iter()
        .map(|p| {
            bumps.iter().fold((0.0, 0.0), |(ax, ay), b| {
                let d2 = (p.x - b.x).powi(2) + (p.y - b.y).powi(2);
                let w = (-d2 / (2.0 * b.radius * b.radius)).exp();
                (ax + w * b.dx, ay + w * b.dy)
            })
        })
        .collect();
    let peak = raw.iter().map(|(x, y)| x.hypot(*y)).fold(0.0, f64::max);
    raw.iter()
        .map(|(x, y)| (x * DEFORMATION_MAGNITUDE / peak, y * DEFORMATION_MAGNITUDE / peak))
        .collect()
}

/// Mean landmark positions of `class` before jitter and pose.
pub fn class_shape(class: Expression) -> Vec<Point> {
    template()
        .into_iter()
        .zip(class_deformation(class))
        .map(|(p, (dx, dy))| Point::new(p.x + dx, p.y + dy))
        .collect()
}

/// Deterministic sample `index` of `class` under `seed`.
pub fn sample(class: Expression, index: u64, seed: u64) -> SyntheticSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index * 6 + class.index() as u64);
    let jitter = Normal::new(0.0, JITTER_FRACTION * DEFORMATION_MAGNITUDE).unwrap();
    let c = IMAGE_SIZE as f64 / 2.0;
    let scale = rng.random_range(0.9..1.1);
    let rotation = rng.random_range(-6.0f64..6.0).to_radians();
    let shift = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
    // Rotate and scale about the frame centre, then shift.
    let about_centre = SimilarityTransform {
        scale,
        rotation,
        translation: (0.0, 0.0),
    };
    let moved = about_centre.apply(Point::new(c, c));
    let pose = SimilarityTransform {
        translation: (c - moved.x + shift.0, c - moved.y + shift.1),
        ..about_centre
    };
    let points: Vec<Point> = class_shape(class)
        .into_iter()
        .map(|p| {
            let q = Point::new(p.x + jitter.sample(&mut rng), p.y + jitter.sample(&mut rng));
            pose.apply(q)
        })
        .collect();
    let noise_seed = rng.random::<u64>();
    let image = render(&points, scale, noise_seed);
    SyntheticSample {
        label: class,
        landmarks: LandmarkSet::new(points).expect("finite synthetic landmarks"),
        image,
    }
}

/// `n_per_class` samples of every class, class-major.
pub fn generate(n_per_class: usize, seed: u64) -> Vec<SyntheticSample> {
    let jobs: Vec<(Expression, u64)> = Expression::ALL
        .iter()
        .flat_map(|&c| (0..n_per_class as u64).map(move |i| (c, i)))
        .collect();
    jobs.par_iter().map(|&(c, i)| sample(c, i, seed)).collect()
}

struct Stroke {
    path: &'static [usize],
    closed: bool,
    width: f64,
    depth: f64,
}

const STROKES: [Stroke; 9] = [
    Stroke { path: &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16], closed: false, width: 2.0, depth: 0.25 },
    Stroke { path: &[17, 18, 19, 20, 21], closed: false, width: 2.5, depth: 0.5 },
    Stroke { path: &[22, 23, 24, 25, 26], closed: false, width: 2.5, depth: 0.5 },
    Stroke { path: &[27, 28, 29, 30], closed: false, width: 1.5, depth: 0.25 },
    Stroke { path: &[31, 32, 33, 34, 35], closed: false, width: 1.5, depth: 0.3 },
    Stroke { path: &[36, 37, 38, 39, 40, 41], closed: true, width: 1.5, depth: 0.55 },
    Stroke { path: &[42, 43, 44, 45, 46, 47], closed: true, width: 1.5, depth: 0.55 },
    Stroke { path: &[48, 49, 50, 51, 52, 53, 54, 55, 56, 57, 58, 59], closed: true, width: 2.0, depth: 0.45 },
    Stroke { path: &[60, 61, 62, 63, 64, 65, 66, 67], closed: true, width: 1.5, depth: 0.55 },
];

fn segment_distance(p: (f64, f64), a: Point, b: Point) -> f64 {
    let (vx, vy) = (b.x - a.x, b.y - a.y);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.x) * vx + (p.1 - a.y) * vy) / len2).clamp(0.0, 1.0)
    };
    (p.0 - a.x - t * vx).hypot(p.1 - a.y - t * vy)
}

/// Renders a face for landmarks `points` drawn at pose scale `scale`.
pub fn render(points: &[Point], scale: f64, noise_seed: u64) -> GrayImage {
    let n = IMAGE_SIZE;
    let mut ink = vec![0.0f64; n * n];
    for stroke in &STROKES {
        let sigma = stroke.width * scale;
        let reach = 3.0 * sigma;
        let mut segs: Vec<(usize, usize)> = stroke.path.windows(2).map(|w| (w[0], w[1])).collect();
        if stroke.closed {
            segs.push((*stroke.path.last().unwrap(), stroke.path[0]));
        }
        for (i, j) in segs {
            let (a, b) = (points[i], points[j]);
            let x0 = (a.x.min(b.x) - reach).floor().max(0.0) as usize;
            let x1 = ((a.x.max(b.x) + reach).ceil().max(0.0) as usize).min(n - 1);
            let y0 = (a.y.min(b.y) - reach).floor().max(0.0) as usize;
            let y1 = ((a.y.max(b.y) + reach).ceil().max(0.0) as usize).min(n - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let d = segment_distance((x as f64, y as f64), a, b);
                    let v = stroke.depth * (-d * d / (2.0 * sigma * sigma)).exp();
                    let cell = &mut ink[y * n + x];
                    *cell = cell.max(v);
                }
            }
        }
    }
    // Pupils.
    for range in [36..42, 42..48] {
        let c = range.clone().fold((0.0, 0.0), |(x, y), i| (x + points[i].x, y + points[i].y));
        let (cx, cy) = (c.0 / 6.0, c.1 / 6.0);
        let r = 3.0 * scale;
        for y in 0..n {
            for x in 0..n {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                if d2 < 16.0 * r * r {
                    let cell = &mut ink[y * n + x];
                    *cell = cell.max(0.6 * (-d2 / (2.0 * r * r)).exp());
                }
            }
        }
    }

    // Face blob: ellipse through the jaw and brow region, lit from the left.
    let chin = points[8];
    let (l, r) = (points[0], points[16]);
    let centre = Point::new((l.x + r.x) / 2.0, (l.y + r.y + chin.y) / 3.0);
    let half_w = (r - l).norm() / 2.0 + 4.0 * scale;
    let half_h = (chin - centre).norm() + 4.0 * scale;
    let axis = (r.x - l.x, r.y - l.y);
    let axis_len = axis.0.hypot(axis.1);
    let (ux, uy) = (axis.0 / axis_len, axis.1 / axis_len);

    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let mut pixels = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let (px, py) = (x as f64 - centre.x, y as f64 - centre.y);
            let along = px * ux + py * uy;
            let across = -px * uy + py * ux;
            let rho = ((along / half_w).powi(2) + (across / half_h).powi(2)).sqrt();
            let inside = 1.0 / (1.0 + ((rho - 1.0) * 12.0).exp());
            let background = 0.15 + 0.25 * y as f64 / (n - 1) as f64;
            let skin = 0.72 - 0.12 * along / half_w;
            let base = background + inside * (skin - background);
            let v = base * (1.0 - ink[y * n + x]) + noise.sample(&mut rng);
            pixels[y * n + x] = v.clamp(0.0, 1.0);
        }
    }
    GrayImage::new(n, n, pixels)
}

/// Writes `n_per_class` samples per class as PNG images and landmark CSVs
/// under `dir`, plus `dir/manifest.csv` with relative paths. Subject ids
/// pair up the i-th sample of every class. The returned manifest holds the
/// paths joined onto `dir`, as if loaded from the written file.
pub fn write_dataset(dir: &Path, n_per_class: usize, seed: u64) -> Result<DatasetManifest, crate::Error> {
    std::fs::create_dir_all(dir.join("images")).map_err(crate::data::DataError::Io)?;
    std::fs::create_dir_all(dir.join("landmarks")).map_err(crate::data::DataError::Io)?;
    let samples = generate(n_per_class, seed);
    let entries = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let stem = format!("{i:04}_{}", s.label.name().to_ascii_lowercase());
            let image = PathBuf::from("images").join(format!("{stem}.png"));
            let landmarks = PathBuf::from("landmarks").join(format!("{stem}.csv"));
            s.image.save_png(&dir.join(&image))?;
            s.landmarks
                .save(&dir.join(&landmarks))
                .map_err(crate::data::DataError::Io)?;
            Ok(ManifestEntry {
                image,
                landmarks,
                label: s.label,
                subject: Some(format!("s{:03}", i % n_per_class.max(1))),
            })
        })
        .collect::<Result<Vec<_>, crate::Error>>()?;
    let mut manifest = DatasetManifest { entries };
    manifest
        .save(&dir.join("manifest.csv"))
        .map_err(crate::data::DataError::Io)?;
    for e in &mut manifest.entries {
        e.image = dir.join(&e.image);
        e.landmarks = dir.join(&e.landmarks);
    }
    Ok(manifest)
}
