//! Inter Vector Angle (IVA) features.
//!
//! For every unordered triple of landmarks `a < b < c` the three interior
//! angles of the triangle they span are emitted, giving
//! `3 * C(68, 3) = 150348` values. Angles are invariant under translation,
//! uniform scaling, rotation and reflection of the landmark set.
//!
//! Layout: slot `3 * rank(a, b, c) + k`, where `rank` is the position of the
//! triple in lexicographic order and `k` is 0, 1 or 2 for the angle at `a`,
//! `b` or `c`. Collinear or coincident triples are zero in all three slots.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{LandmarkSet, Point, NUM_LANDMARKS};

/// `C(68, 3)`.
pub const NUM_TRIPLES: usize = NUM_LANDMARKS * (NUM_LANDMARKS - 1) * (NUM_LANDMARKS - 2) / 6;
/// Length of an IVA feature vector.
pub const IVA_DIM: usize = 3 * NUM_TRIPLES;
/// Relative collinearity tolerance.
pub const DEFAULT_COLLINEAR_TOL: f64 = 1e-9;
/// Vectors shorter than this are treated as coincident points.
pub const COINCIDENT_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeometryError {
    #[error("landmark index out of range: ({0}, {1}, {2})")]
    IndexOutOfRange(usize, usize, usize),
    #[error("triple must be strictly increasing: ({0}, {1}, {2})")]
    NotStrictlyIncreasing(usize, usize, usize),
    #[error("vertex {vertex} is not one of ({a}, {b}, {c})")]
    VertexNotInTriple {
        a: usize,
        b: usize,
        c: usize,
        vertex: usize,
    },
}

/// Displacement between two landmarks.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub dx: f64,
    pub dy: f64,
}

impl Vec2 {
    pub const fn new(dx: f64, dy: f64) -> Vec2 {
        Vec2 { dx, dy }
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.dx * o.dx + self.dy * o.dy
    }

    /// z-component of the 2D cross product.
    #[inline]
    pub fn cross(self, o: Vec2) -> f64 {
        self.dx * o.dy - self.dy * o.dx
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.dx.hypot(self.dy)
    }
}

/// Scale-free collinearity test:
/// `|cross(b - a, c - a)| <= tol * max(|b - a| * |c - a|, eps)`.
pub fn is_degenerate(a: Point, b: Point, c: Point, tol: f64) -> bool {
    let u = b - a;
    let v = c - a;
    u.cross(v).abs() <= tol * (u.norm() * v.norm()).max(f64::MIN_POSITIVE)
}

/// Order-independent degeneracy of the triangle `(p, q, r)`: degenerate when
/// [`is_degenerate`] holds from any of its three vertices.
pub fn triangle_is_degenerate(p: Point, q: Point, r: Point, tol: f64) -> bool {
    let (pq, pr, qr) = (q - p, r - p, r - q);
    let (lpq, lpr, lqr) = (pq.norm(), pr.norm(), qr.norm());
    let area2 = pq.cross(pr).abs();
    let widest = (lpq * lpr).max(lpq * lqr).max(lpr * lqr);
    lpq < COINCIDENT_EPS
        || lpr < COINCIDENT_EPS
        || lqr < COINCIDENT_EPS
        || area2 <= tol * widest.max(f64::MIN_POSITIVE)
}

/// Angle in `[0, pi]` at `vertex` between the vectors to `b` and to `c`.
///
/// Evaluated as `atan2(|u x v|, u . v)`, which equals `acos(u.v / |u||v|)`
/// but stays accurate for angles near 0 and pi. Degenerate triangles give 0.
pub fn angle_at_vertex(vertex: Point, b: Point, c: Point) -> f64 {
    if triangle_is_degenerate(vertex, b, c, DEFAULT_COLLINEAR_TOL) {
        return 0.0;
    }
    let u = b - vertex;
    let v = c - vertex;
    u.cross(v).abs().atan2(u.dot(v))
}

/// Lexicographic rank of the strictly increasing triple `(a, b, c)` among
/// all `C(68, 3)` triples. Caller guarantees validity.
#[inline]
fn triple_rank(a: usize, b: usize, c: usize) -> usize {
    let n = NUM_LANDMARKS;
    // triples with first element < a: sum_{i<a} C(n-1-i, 2)
    // = C(n, 3) - C(n - a, 3)
    let c3 = |m: usize| m * m.saturating_sub(1) * m.saturating_sub(2) / 6;
    let c2 = |m: usize| m * m.saturating_sub(1) / 2;
    let before_a = c3(n) - c3(n - a);
    // with first == a and second in (a, b): sum_{j=a+1}^{b-1} (n-1-j)
    // = C(n-1-a, 2) - C(n-1-(b-1), 2)
    let before_b = c2(n - 1 - a) - c2(n - b);
    before_a + before_b + (c - b - 1)
}

/// Feature slot for the angle at `vertex` in the triple `a < b < c`.
pub fn triple_index(a: usize, b: usize, c: usize, vertex: usize) -> Result<usize, GeometryError> {
    if a >= NUM_LANDMARKS || b >= NUM_LANDMARKS || c >= NUM_LANDMARKS {
        return Err(GeometryError::IndexOutOfRange(a, b, c));
    }
    if !(a < b && b < c) {
        return Err(GeometryError::NotStrictlyIncreasing(a, b, c));
    }
    let offset = match vertex {
        v if v == a => 0,
        v if v == b => 1,
        v if v == c => 2,
        _ => return Err(GeometryError::VertexNotInTriple { a, b, c, vertex }),
    };
    Ok(3 * triple_rank(a, b, c) + offset)
}

/// Inverse of [`triple_index`]: `(a, b, c, vertex)`.
pub fn triple_from_index(index: usize) -> Option<(usize, usize, usize, usize)> {
    if index >= IVA_DIM {
        return None;
    }
    let mut rank = index / 3;
    let n = NUM_LANDMARKS;
    let mut a = 0;
    loop {
        let m = n - 1 - a;
        let count = m * (m - 1) / 2;
        if rank < count {
            break;
        }
        rank -= count;
        a += 1;
    }
    let mut b = a + 1;
    loop {
        let count = n - 1 - b;
        if rank < count {
            break;
        }
        rank -= count;
        b += 1;
    }
    let c = b + 1 + rank;
    let vertex = [a, b, c][index % 3];
    Some((a, b, c, vertex))
}

/// 150348 inter-vector angles in canonical layout.
#[derive(Debug, Clone, PartialEq)]
pub struct IvaFeatureVector {
    angles: Vec<f64>,
}

impl IvaFeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.angles
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

/// Computes all interior angles of all landmark triangles.
///
/// Pairwise displacements and lengths are computed once; each triangle then
/// costs three dot/cross pairs and three `atan2` calls.
pub fn iva_features(landmarks: &LandmarkSet) -> IvaFeatureVector {
    let pts = landmarks.points();
    let n = NUM_LANDMARKS;
    let mut disp = vec![Vec2::default(); n * n];
    let mut len = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            let d = pts[j] - pts[i];
            disp[i * n + j] = d;
            len[i * n + j] = d.norm();
        }
    }

    let mut angles = Vec::with_capacity(IVA_DIM);
    let tol = DEFAULT_COLLINEAR_TOL;
    for a in 0..n {
        for b in (a + 1)..n {
            let ab = disp[a * n + b];
            let l_ab = len[a * n + b];
            for c in (b + 1)..n {
                let ac = disp[a * n + c];
                let bc = disp[b * n + c];
                let l_ac = len[a * n + c];
                let l_bc = len[b * n + c];
                let area2 = ab.cross(ac).abs();
                let widest = (l_ab * l_ac).max(l_ab * l_bc).max(l_ac * l_bc);
                if l_ab < COINCIDENT_EPS
                    || l_ac < COINCIDENT_EPS
                    || l_bc < COINCIDENT_EPS
                    || area2 <= tol * widest.max(f64::MIN_POSITIVE)
                {
                    angles.extend_from_slice(&[0.0, 0.0, 0.0]);
                    continue;
                }
                // Same operand order as angle_at_vertex so results agree bitwise.
                let ba = disp[b * n + a];
                let ca = disp[c * n + a];
                let cb = disp[c * n + b];
                let at_a = ab.cross(ac).abs().atan2(ab.dot(ac));
                let at_b = ba.cross(bc).abs().atan2(ba.dot(bc));
                let at_c = ca.cross(cb).abs().atan2(ca.dot(cb));
                angles.extend_from_slice(&[at_a, at_b, at_c]);
            }
        }
    }
    debug_assert_eq!(angles.len(), IVA_DIM);
    IvaFeatureVector { angles }
}

/// Pairwise landmark distances in lexicographic pair order, `C(68, 2)`
/// values. Used only as the vector-length ablation baseline.
pub fn pairwise_distances(landmarks: &LandmarkSet) -> Vec<f64> {
    let pts = landmarks.points();
    let mut out = Vec::with_capacity(NUM_PAIRS);
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            out.push((pts[j] - pts[i]).norm());
        }
    }
    out
}

/// `C(68, 2)`.
pub const NUM_PAIRS: usize = NUM_LANDMARKS * (NUM_LANDMARKS - 1) / 2;
