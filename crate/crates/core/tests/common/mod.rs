//! Reference implementations used as oracles. They follow the textbook
//! definitions directly and share no code with the library.

#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sention_core::data::{GrayImage, LandmarkSet, Point};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_landmarks(rng: &mut ChaCha8Rng, spread: f64) -> LandmarkSet {
    let pts = (0..68)
        .map(|_| Point::new(rng.random_range(-spread..spread), rng.random_range(-spread..spread)))
        .collect();
    LandmarkSet::new(pts).unwrap()
}

/// Slot-by-slot angles over every increasing triple, vertex order a, b, c.
/// A triple with a near-zero side or collinear corners (relative cross
/// product at `a` below 1e-9) contributes three zeros.
pub fn naive_iva(lm: &LandmarkSet) -> Vec<f64> {
    let p = lm.points();
    let mut out = Vec::new();
    for a in 0..68 {
        for b in a + 1..68 {
            for c in b + 1..68 {
                let (pa, pb, pc) = (p[a], p[b], p[c]);
                let side = |u: Point, v: Point| (u.x - v.x).hypot(u.y - v.y);
                let (ab, ac, bc) = (side(pa, pb), side(pa, pc), side(pb, pc));
                let cross = (pb.x - pa.x) * (pc.y - pa.y) - (pb.y - pa.y) * (pc.x - pa.x);
                let degenerate = ab < 1e-12 || ac < 1e-12 || bc < 1e-12 || cross.abs() <= 1e-9 * ab * ac;
                for (v, o1, o2) in [(pa, pb, pc), (pb, pa, pc), (pc, pa, pb)] {
                    if degenerate {
                        out.push(0.0);
                        continue;
                    }
                    let (ux, uy) = (o1.x - v.x, o1.y - v.y);
                    let (wx, wy) = (o2.x - v.x, o2.y - v.y);
                    let cos = (ux * wx + uy * wy) / (ux.hypot(uy) * wx.hypot(wy));
                    out.push(cos.clamp(-1.0, 1.0).acos());
                }
            }
        }
    }
    out
}

/// Direct 2-D form of one pyramid-up step: zero-stuff, then convolve with
/// the outer product of (1,4,6,4,1)/16 times 4, mirroring indices at the
/// border without repeating the edge sample.
pub fn naive_pyramid_up(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let (w2, h2) = (2 * w, 2 * h);
    let k = [1.0, 4.0, 6.0, 4.0, 1.0];
    let mirror = |i: isize, n: isize| {
        let mut i = i;
        while i < 0 || i >= n {
            if i < 0 {
                i = -i;
            }
            if i >= n {
                i = 2 * (n - 1) - i;
            }
        }
        i
    };
    GrayImage::from_fn(w2 as usize, h2 as usize, |x, y| {
        let mut acc = 0.0;
        for (j, ky) in k.iter().enumerate() {
            for (i, kx) in k.iter().enumerate() {
                let sx = mirror(x as isize + i as isize - 2, w2);
                let sy = mirror(y as isize + j as isize - 2, h2);
                if sx % 2 == 0 && sy % 2 == 0 {
                    acc += kx * ky * img.get((sx / 2) as usize, (sy / 2) as usize);
                }
            }
        }
        (4.0 * acc / 256.0).clamp(0.0, 1.0)
    })
}

/// Per-pixel HOG: every block recomputes its cells' histograms from the
/// pixels. Central differences with clamped borders, unsigned orientation,
/// linear vote between the two nearest bin centres (all of it to the end
/// bin outside the outermost centres), 2x2-cell blocks at one-cell stride,
/// L2-Hys normalisation.
pub fn naive_hog(img: &GrayImage, bins: usize, cell: usize, clip: f64) -> Vec<f64> {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let px = |x: isize, y: isize| img.get(x.clamp(0, w - 1) as usize, y.clamp(0, h - 1) as usize);
    let width = PI / bins as f64;
    let cell_hist = |cx: usize, cy: usize| {
        let mut hist = vec![0.0; bins];
        for y in cy * cell..(cy + 1) * cell {
            for x in cx * cell..(cx + 1) * cell {
                let (x, y) = (x as isize, y as isize);
                let gx = px(x + 1, y) - px(x - 1, y);
                let gy = px(x, y + 1) - px(x, y - 1);
                let mag = gx.hypot(gy);
                if mag == 0.0 {
                    continue;
                }
                let theta = gy.atan2(gx).rem_euclid(PI) % PI;
                for (b, slot) in hist.iter_mut().enumerate() {
                    let centre = (b as f64 + 0.5) * width;
                    let share = if (b == 0 && theta <= centre) || (b == bins - 1 && theta >= centre) {
                        1.0
                    } else {
                        (1.0 - (theta - centre).abs() / width).max(0.0)
                    };
                    *slot += mag * share;
                }
            }
        }
        hist
    };
    let (cells_x, cells_y) = (img.width() / cell, img.height() / cell);
    let mut out = Vec::new();
    for by in 0..cells_y - 1 {
        for bx in 0..cells_x - 1 {
            let mut block = Vec::new();
            for cy in by..by + 2 {
                for cx in bx..bx + 2 {
                    block.extend(cell_hist(cx, cy));
                }
            }
            let eps = 1e-5;
            let n1 = (block.iter().map(|v| v * v).sum::<f64>() + eps * eps).sqrt();
            let clipped: Vec<f64> = block.iter().map(|v| (v / n1).min(clip)).collect();
            let n2 = clipped.iter().map(|v| v * v).sum::<f64>().sqrt() + eps;
            out.extend(clipped.iter().map(|v| v / n2));
        }
    }
    out
}

pub fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, lo: f64, hi: f64) -> GrayImage {
    let px: Vec<f64> = (0..w * h).map(|_| rng.random_range(lo..hi)).collect();
    GrayImage::new(w, h, px)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Landmarks in an eye-based frame: mid-eye at the origin, eye line along
/// +x, unit inter-ocular distance; flattened to 136 coordinates.
pub fn eye_normalised(lm: &LandmarkSet) -> Vec<f64> {
    let p = lm.points();
    let mid = |i: usize, j: usize| Point::new((p[i].x + p[j].x) / 2.0, (p[i].y + p[j].y) / 2.0);
    let (l, r) = (mid(36, 39), mid(42, 45));
    let (dx, dy) = (r.x - l.x, r.y - l.y);
    let d2 = dx * dx + dy * dy;
    let c = Point::new((l.x + r.x) / 2.0, (l.y + r.y) / 2.0);
    p.iter()
        .flat_map(|q| {
            let (x, y) = (q.x - c.x, q.y - c.y);
            [(x * dx + y * dy) / d2, (-x * dy + y * dx) / d2]
        })
        .collect()
}

/// Nearest-centroid accuracy with fold `i % k` inside each class.
pub fn nearest_centroid_cv(x: &[Vec<f64>], labels: &[usize], classes: usize, k: usize) -> f64 {
    let mut seen = vec![0usize; classes];
    let fold: Vec<usize> = labels
        .iter()
        .map(|&l| {
            seen[l] += 1;
            (seen[l] - 1) % k
        })
        .collect();
    let dim = x[0].len();
    let mut correct = 0;
    for f in 0..k {
        let mut sums = vec![vec![0.0; dim]; classes];
        let mut counts = vec![0usize; classes];
        for i in (0..x.len()).filter(|&i| fold[i] != f) {
            counts[labels[i]] += 1;
            for (s, v) in sums[labels[i]].iter_mut().zip(&x[i]) {
                *s += v;
            }
        }
        for i in (0..x.len()).filter(|&i| fold[i] == f) {
            let best = (0..classes)
                .filter(|&c| counts[c] > 0)
                .min_by(|&a, &b| {
                    let d = |c: usize| {
                        sums[c]
                            .iter()
                            .zip(&x[i])
                            .map(|(s, v)| (s / counts[c] as f64 - v).powi(2))
                            .sum::<f64>()
                    };
                    d(a).total_cmp(&d(b))
                })
                .unwrap();
            if best == labels[i] {
                correct += 1;
            }
        }
    }
    correct as f64 / x.len() as f64
}
