//! Histogram of oriented gradients on the aligned face, after Gaussian
//! pyramid upscaling.
//!
//! Pipeline: centred `[-1, 0, 1]` gradients with replicated borders,
//! contrast-insensitive orientation in `[0, pi)`, linear vote into the two
//! nearest orientation bins (clamped at the ends of the range), hard
//! assignment of pixels to cells, 2x2-cell blocks at a one-cell stride,
//! L2-Hys block normalisation.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::GrayImage;

pub const HOG_EPS: f64 = 1e-5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HogError {
    #[error("image {width}x{height} is smaller than two cells of {cell_size} px")]
    ImageTooSmall {
        width: usize,
        height: usize,
        cell_size: usize,
    },
    #[error("invalid HOG configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HogConfig {
    pub orientations: usize,
    pub cell_size: usize,
    /// Cells per block side.
    pub block: usize,
    pub clip: f64,
    pub upscale_levels: usize,
}

impl Default for HogConfig {
    fn default() -> Self {
        HogConfig {
            orientations: 9,
            cell_size: 8,
            block: 2,
            clip: 0.2,
            upscale_levels: 1,
        }
    }
}

impl HogConfig {
    pub fn validate(&self) -> Result<(), HogError> {
        if self.orientations < 1 {
            return Err(HogError::InvalidConfig("orientations must be >= 1".into()));
        }
        if self.cell_size < 1 {
            return Err(HogError::InvalidConfig("cell_size must be >= 1".into()));
        }
        if self.block < 1 {
            return Err(HogError::InvalidConfig("block must be >= 1".into()));
        }
        if !(self.clip > 0.0 && self.clip <= 1.0) {
            return Err(HogError::InvalidConfig("clip must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Descriptor length for an image of the given size (after upscaling).
    pub fn dimension(&self, width: usize, height: usize) -> usize {
        let (cx, cy) = (width / self.cell_size, height / self.cell_size);
        let bx = (cx + 1).saturating_sub(self.block);
        let by = (cy + 1).saturating_sub(self.block);
        bx * by * self.block * self.block * self.orientations
    }

    /// Descriptor length for a square aligned face of side `side`, taking
    /// the upscale levels into account.
    pub fn dimension_for_face(&self, side: usize) -> usize {
        let s = side << self.upscale_levels;
        self.dimension(s, s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HogFeatureVector {
    values: Vec<f64>,
}

impl HogFeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

const BINOMIAL5: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Reflect-101 index into `0..n` (edge sample not repeated).
#[inline]
fn reflect101(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

/// One pyramid-up step: zero-insertion to double size, then the separable
/// binomial kernel with a total gain of 4.
fn pyramid_up_once(image: &GrayImage) -> GrayImage {
    let (w, h) = (image.width(), image.height());
    let (w2, h2) = (2 * w, 2 * h);
    // Horizontal pass on the zero-stuffed rows (only even rows are nonzero).
    let mut horiz = vec![0.0f64; w2 * h];
    for y in 0..h {
        let src = &image.pixels()[y * w..(y + 1) * w];
        let row = &mut horiz[y * w2..(y + 1) * w2];
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, coeff) in BINOMIAL5.iter().enumerate() {
                let xi = reflect101(x as isize + k as isize - 2, w2);
                if xi.is_multiple_of(2) {
                    acc += coeff * src[xi / 2];
                }
            }
            *out = 2.0 * acc;
        }
    }
    let mut out = vec![0.0f64; w2 * h2];
    for y in 0..h2 {
        let dst = &mut out[y * w2..(y + 1) * w2];
        for (k, coeff) in BINOMIAL5.iter().enumerate() {
            let yi = reflect101(y as isize + k as isize - 2, h2);
            if !yi.is_multiple_of(2) {
                continue;
            }
            let src = &horiz[(yi / 2) * w2..(yi / 2 + 1) * w2];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += 2.0 * coeff * s;
            }
        }
    }
    GrayImage::from_raw_clamped(w2, h2, out)
}

/// Doubles width and height `levels` times. `levels == 0` returns a copy.
pub fn pyramid_upscale(image: &GrayImage, levels: usize) -> GrayImage {
    let mut current = image.clone();
    for _ in 0..levels {
        current = pyramid_up_once(&current);
    }
    current
}

/// Contrast-insensitive orientation of a gradient, folded into `[0, pi)`.
#[inline]
pub fn unsigned_orientation(gx: f64, gy: f64) -> f64 {
    let mut theta = gy.atan2(gx);
    if theta < 0.0 {
        theta += PI;
    }
    if theta >= PI {
        theta -= PI;
    }
    theta
}

/// Splits a unit vote for orientation `theta` between the two nearest bin
/// centres `(i + 0.5) * pi / bins`. Orientations below the first centre or
/// above the last go entirely to the end bin. Returns `(lo, w_lo, hi, w_hi)`.
#[inline]
pub fn orientation_vote(theta: f64, bins: usize) -> (usize, f64, usize, f64) {
    let t = theta * bins as f64 / PI - 0.5;
    if t <= 0.0 {
        return (0, 1.0, 0, 0.0);
    }
    let last = (bins - 1) as f64;
    if t >= last {
        return (bins - 1, 1.0, bins - 1, 0.0);
    }
    let lo = t.floor();
    let frac = t - lo;
    let lo = lo as usize;
    (lo, 1.0 - frac, lo + 1, frac)
}

/// L2 normalisation followed by component clipping; the first two stages
/// of L2-Hys.
pub fn l2_hys_clipped(block: &[f64], clip: f64) -> Vec<f64> {
    let norm = (block.iter().map(|v| v * v).sum::<f64>() + HOG_EPS * HOG_EPS).sqrt();
    block.iter().map(|v| (v / norm).min(clip)).collect()
}

/// Full L2-Hys: normalise, clip, renormalise by the clipped norm plus eps.
pub fn l2_hys(block: &[f64], clip: f64) -> Vec<f64> {
    let mut clipped = l2_hys_clipped(block, clip);
    let norm = clipped.iter().map(|v| v * v).sum::<f64>().sqrt() + HOG_EPS;
    for v in &mut clipped {
        *v /= norm;
    }
    clipped
}

/// Per-cell orientation histograms, `cells_y x cells_x x orientations`.
pub fn cell_histograms(image: &GrayImage, config: &HogConfig) -> (usize, usize, Vec<f64>) {
    let (w, h) = (image.width(), image.height());
    let cs = config.cell_size;
    let bins = config.orientations;
    let (cells_x, cells_y) = (w / cs, h / cs);
    let mut hist = vec![0.0f64; cells_x * cells_y * bins];
    let px = image.pixels();
    for y in 0..cells_y * cs {
        let row = &px[y * w..(y + 1) * w];
        let up = &px[y.saturating_sub(1) * w..][..w];
        let down = &px[(y + 1).min(h - 1) * w..][..w];
        let cell_row = (y / cs) * cells_x;
        for x in 0..cells_x * cs {
            let gx = row[(x + 1).min(w - 1)] - row[x.saturating_sub(1)];
            let gy = down[x] - up[x];
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let (lo, wlo, hi, whi) = orientation_vote(unsigned_orientation(gx, gy), bins);
            let base = (cell_row + x / cs) * bins;
            hist[base + lo] += mag * wlo;
            hist[base + hi] += mag * whi;
        }
    }
    (cells_x, cells_y, hist)
}

/// HOG descriptor of `image` as given (no upscaling).
pub fn hog_features(image: &GrayImage, config: &HogConfig) -> Result<HogFeatureVector, HogError> {
    config.validate()?;
    let min = config.block.max(2) * config.cell_size;
    if image.width() < min || image.height() < min {
        return Err(HogError::ImageTooSmall {
            width: image.width(),
            height: image.height(),
            cell_size: config.cell_size,
        });
    }
    let (cells_x, cells_y, hist) = cell_histograms(image, config);
    let bins = config.orientations;
    let nb = config.block;
    let (bx, by) = (cells_x + 1 - nb, cells_y + 1 - nb);
    let mut values = Vec::with_capacity(bx * by * nb * nb * bins);
    let mut block = Vec::with_capacity(nb * nb * bins);
    for by_i in 0..by {
        for bx_i in 0..bx {
            block.clear();
            for cy in by_i..by_i + nb {
                for cx in bx_i..bx_i + nb {
                    let base = (cy * cells_x + cx) * bins;
                    block.extend_from_slice(&hist[base..base + bins]);
                }
            }
            values.extend(l2_hys(&block, config.clip));
        }
    }
    Ok(HogFeatureVector { values })
}

/// Upscales the aligned face by `config.upscale_levels` and extracts HOG.
pub fn face_hog(aligned: &GrayImage, config: &HogConfig) -> Result<HogFeatureVector, HogError> {
    let up = pyramid_upscale(aligned, config.upscale_levels);
    hog_features(&up, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upscale_sizes_and_identity() {
        let img = GrayImage::from_fn(192, 192, |x, y| ((x ^ y) % 13) as f64 / 13.0);
        let up = pyramid_upscale(&img, 1);
        assert_eq!((up.width(), up.height()), (384, 384));
        assert_eq!(pyramid_upscale(&img, 0), img);
    }

    #[test]
    fn upscale_preserves_constant() {
        let img = GrayImage::filled(7, 5, 0.5);
        let up = pyramid_upscale(&img, 2);
        assert_eq!((up.width(), up.height()), (28, 20));
        assert!(up.pixels().iter().all(|v| (v - 0.5).abs() < 1e-9));
    }

    #[test]
    fn upscale_interpolates_even_samples() {
        // Away from borders, a linear ramp stays linear.
        let img = GrayImage::from_fn(16, 4, |x, _| x as f64 / 32.0);
        let up = pyramid_upscale(&img, 1);
        for x in 4..28 {
            let expect = x as f64 / 64.0;
            assert!((up.get(x, 3) - expect).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn reflect_indices() {
        let idx: Vec<usize> = (-3..8).map(|i| reflect101(i, 5)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1]);
    }

    #[test]
    fn orientation_fold() {
        assert_eq!(unsigned_orientation(1.0, 0.0), 0.0);
        assert_eq!(unsigned_orientation(-1.0, 0.0), 0.0);
        assert_eq!(unsigned_orientation(-1.0, -0.0), 0.0);
        assert!((unsigned_orientation(0.0, -1.0) - PI / 2.0).abs() < 1e-15);
        let t = unsigned_orientation(1.0, -1e-300);
        assert!((0.0..PI).contains(&t));
    }

    #[test]
    fn votes() {
        let w = PI / 9.0;
        assert_eq!(orientation_vote(0.0, 9), (0, 1.0, 0, 0.0));
        assert_eq!(orientation_vote(PI - 1e-12, 9), (8, 1.0, 8, 0.0));
        let (lo, wl, hi, wh) = orientation_vote(w, 9);
        assert_eq!((lo, hi), (0, 1));
        assert!((wl - 0.5).abs() < 1e-12 && (wh - 0.5).abs() < 1e-12);
        let (lo, wl, _, _) = orientation_vote(1.5 * w, 9);
        assert_eq!(lo, 1);
        assert!((wl - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_image_gives_zero_vector() {
        let img = GrayImage::filled(64, 48, 0.37);
        let f = hog_features(&img, &HogConfig::default()).unwrap();
        assert_eq!(f.len(), 7 * 5 * 36);
        assert!(f.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn default_dimension_at_384() {
        let cfg = HogConfig::default();
        assert_eq!(cfg.dimension(384, 384), 47 * 47 * 36);
        assert_eq!(cfg.dimension_for_face(192), 79524);
    }

    #[test]
    fn too_small_and_bad_config() {
        let img = GrayImage::filled(15, 40, 0.0);
        assert!(matches!(
            hog_features(&img, &HogConfig::default()),
            Err(HogError::ImageTooSmall { .. })
        ));
        let cfg = HogConfig {
            clip: 0.0,
            ..HogConfig::default()
        };
        assert!(matches!(
            hog_features(&GrayImage::filled(32, 32, 0.0), &cfg),
            Err(HogError::InvalidConfig(_))
        ));
    }

    #[test]
    fn vertical_step_edge_votes_only_bin_zero() {
        let img = GrayImage::from_fn(64, 64, |x, _| if x < 32 { 0.0 } else { 1.0 });
        let cfg = HogConfig::default();
        // One cell touching the edge: pixels x = 31, 32 have gx = 1 over 8 rows.
        let (cells_x, _, hist) = cell_histograms(&img, &cfg);
        let cell = (2 * cells_x + 3) * 9;
        assert_eq!(hist[cell], 8.0);
        assert!(hist[cell + 1..cell + 9].iter().all(|&v| v == 0.0));
        let cell = (2 * cells_x + 4) * 9;
        assert_eq!(hist[cell], 8.0);

        let f = hog_features(&img, &cfg).unwrap();
        for block in f.as_slice().chunks(36) {
            for (i, &v) in block.iter().enumerate() {
                if i % 9 != 0 {
                    assert_eq!(v, 0.0);
                }
            }
        }
        assert!(f.as_slice().iter().any(|&v| v > 0.0));
    }

    #[test]
    fn l2_hys_bounds() {
        let block: Vec<f64> = (0..36).map(|i| if i == 3 { 50.0 } else { i as f64 * 0.01 }).collect();
        let clipped = l2_hys_clipped(&block, 0.2);
        assert!(clipped.iter().all(|&v| v <= 0.2));
        let out = l2_hys(&block, 0.2);
        let n: f64 = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(n <= 1.0 + 1e-6);
        assert!(l2_hys(&[0.0; 36], 0.2).iter().all(|&v| v == 0.0));
    }
}
