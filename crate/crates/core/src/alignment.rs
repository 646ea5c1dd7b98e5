//! Eye-centre similarity alignment into a fixed 192x192 frame.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{GrayImage, LandmarkSet, Point};

pub const LEFT_EYE_CORNERS: (usize, usize) = (36, 39);
pub const RIGHT_EYE_CORNERS: (usize, usize) = (42, 45);

#[derive(Debug, Error, PartialEq)]
pub enum AlignError {
    #[error("eye centres coincide; cannot define a similarity transform")]
    DegenerateEyes,
}

/// Output frame geometry: side length and the canonical eye centres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignConfig {
    pub size: usize,
    pub left_eye: Point,
    pub right_eye: Point,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            size: 192,
            left_eye: Point::new(57.6, 67.2),
            right_eye: Point::new(134.4, 67.2),
        }
    }
}

/// `p -> scale * R(rotation) * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: f64,
    pub translation: (f64, f64),
}

impl SimilarityTransform {
    pub fn identity() -> SimilarityTransform {
        SimilarityTransform {
            scale: 1.0,
            rotation: 0.0,
            translation: (0.0, 0.0),
        }
    }

    #[inline]
    pub fn apply(&self, p: Point) -> Point {
        let (s, c) = self.rotation.sin_cos();
        let (a, b) = (self.scale * c, self.scale * s);
        Point::new(
            a * p.x - b * p.y + self.translation.0,
            b * p.x + a * p.y + self.translation.1,
        )
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let inv_scale = 1.0 / self.scale;
        let rotation = -self.rotation;
        let (s, c) = rotation.sin_cos();
        let (tx, ty) = self.translation;
        SimilarityTransform {
            scale: inv_scale,
            rotation,
            translation: (
                -inv_scale * (c * tx - s * ty),
                -inv_scale * (s * tx + c * ty),
            ),
        }
    }

    /// `self` after `first`.
    pub fn compose(&self, first: &SimilarityTransform) -> SimilarityTransform {
        let origin = self.apply(first.apply(Point::new(0.0, 0.0)));
        SimilarityTransform {
            scale: self.scale * first.scale,
            rotation: self.rotation + first.rotation,
            translation: (origin.x, origin.y),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedFace {
    pub image: GrayImage,
    pub transform: SimilarityTransform,
}

/// Midpoints of the two eyes' corner landmarks.
pub fn eye_centers(landmarks: &LandmarkSet) -> Result<(Point, Point), AlignError> {
    let left = landmarks
        .get(LEFT_EYE_CORNERS.0)
        .midpoint(landmarks.get(LEFT_EYE_CORNERS.1));
    let right = landmarks
        .get(RIGHT_EYE_CORNERS.0)
        .midpoint(landmarks.get(RIGHT_EYE_CORNERS.1));
    if (right - left).norm() <= 1e-9 {
        return Err(AlignError::DegenerateEyes);
    }
    Ok((left, right))
}

/// The similarity mapping `src_left -> dst_left` and `src_right -> dst_right`.
pub fn similarity_from_pairs(
    src_left: Point,
    src_right: Point,
    dst_left: Point,
    dst_right: Point,
) -> Result<SimilarityTransform, AlignError> {
    let src = src_right - src_left;
    let dst = dst_right - dst_left;
    let (src_len, dst_len) = (src.norm(), dst.norm());
    if src_len <= 1e-9 || dst_len <= 1e-9 {
        return Err(AlignError::DegenerateEyes);
    }
    let scale = dst_len / src_len;
    let rotation = dst.dy.atan2(dst.dx) - src.dy.atan2(src.dx);
    let partial = SimilarityTransform {
        scale,
        rotation,
        translation: (0.0, 0.0),
    }
    .apply(src_left);
    Ok(SimilarityTransform {
        scale,
        rotation,
        translation: (dst_left.x - partial.x, dst_left.y - partial.y),
    })
}

/// Bilinear sample with pixel centres at integer coordinates; neighbours
/// outside the image contribute 0.
#[inline]
pub fn sample_bilinear(image: &GrayImage, x: f64, y: f64) -> f64 {
    let (w, h) = (image.width() as isize, image.height() as isize);
    let (x0f, y0f) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0f, y - y0f);
    if x0f < -1.0 || y0f < -1.0 || x0f >= w as f64 || y0f >= h as f64 {
        return 0.0;
    }
    let (x0, y0) = (x0f as isize, y0f as isize);
    let at = |xi: isize, yi: isize| -> f64 {
        if xi < 0 || yi < 0 || xi >= w || yi >= h {
            0.0
        } else {
            image.get(xi as usize, yi as usize)
        }
    };
    let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
    let bottom = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Inverse-warps `image` into the canonical frame.
pub fn align_face(
    image: &GrayImage,
    landmarks: &LandmarkSet,
    config: &AlignConfig,
) -> Result<AlignedFace, AlignError> {
    let (left, right) = eye_centers(landmarks)?;
    let transform = similarity_from_pairs(left, right, config.left_eye, config.right_eye)?;
    let inverse = transform.inverse();
    let n = config.size;
    let mut pixels = Vec::with_capacity(n * n);
    for v in 0..n {
        for u in 0..n {
            let src = inverse.apply(Point::new(u as f64, v as f64));
            pixels.push(sample_bilinear(image, src.x, src.y));
        }
    }
    Ok(AlignedFace {
        image: GrayImage::from_raw_clamped(n, n, pixels),
        transform,
    })
}
