//! Per-sample feature extraction and column views over feature tables.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::alignment::{align_face, AlignConfig};
use crate::data::{load_image, load_landmarks, GrayImage, LandmarkSet, ManifestEntry};
use crate::geometry::{iva_features, pairwise_distances, IVA_DIM, NUM_PAIRS};
use crate::hog::{face_hog, HogConfig};
use crate::Error;

/// Which descriptors feed selection and classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    Iva,
    Hog,
    Hybrid,
    /// Pairwise landmark distances only; ablation baseline.
    VectorLengths,
}

impl FeatureMode {
    pub const ALL: [FeatureMode; 4] = [
        FeatureMode::Iva,
        FeatureMode::Hog,
        FeatureMode::Hybrid,
        FeatureMode::VectorLengths,
    ];

    pub fn uses_geometry(self) -> bool {
        !matches!(self, FeatureMode::Hog)
    }

    pub fn uses_appearance(self) -> bool {
        matches!(self, FeatureMode::Hog | FeatureMode::Hybrid)
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureMode::Iva => "iva",
            FeatureMode::Hog => "hog",
            FeatureMode::Hybrid => "hybrid",
            FeatureMode::VectorLengths => "vector_lengths",
        }
    }

    /// Width of the geometric block in this mode.
    pub fn geometric_dim(self) -> usize {
        match self {
            FeatureMode::Iva | FeatureMode::Hybrid => IVA_DIM,
            FeatureMode::VectorLengths => NUM_PAIRS,
            FeatureMode::Hog => 0,
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureMode::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown feature mode `{s}` (iva, hog, hybrid, vector_lengths)"))
    }
}

/// Everything that determines how an image becomes a feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub mode: FeatureMode,
    pub hog: HogConfig,
    pub align: AlignConfig,
}

impl ExtractionConfig {
    pub fn new(mode: FeatureMode) -> ExtractionConfig {
        ExtractionConfig {
            mode,
            hog: HogConfig::default(),
            align: AlignConfig::default(),
        }
    }

    pub fn appearance_dim(&self) -> usize {
        if self.mode.uses_appearance() {
            self.hog.dimension_for_face(self.align.size)
        } else {
            0
        }
    }
}

/// Geometric and appearance descriptors of one face. A block not used by
/// the mode is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFeatures {
    pub geometric: Vec<f64>,
    pub appearance: Vec<f64>,
}

pub fn extract_from_parts(
    image: Option<&GrayImage>,
    landmarks: &LandmarkSet,
    config: &ExtractionConfig,
) -> Result<SampleFeatures, Error> {
    let geometric = match config.mode {
        FeatureMode::Iva | FeatureMode::Hybrid => iva_features(landmarks).into_vec(),
        FeatureMode::VectorLengths => pairwise_distances(landmarks),
        FeatureMode::Hog => Vec::new(),
    };
    let appearance = if config.mode.uses_appearance() {
        let image = image.expect("appearance features need an image");
        let aligned = align_face(image, landmarks, &config.align)?;
        face_hog(&aligned.image, &config.hog)?.into_vec()
    } else {
        Vec::new()
    };
    Ok(SampleFeatures {
        geometric,
        appearance,
    })
}

/// Loads the entry's files and extracts its features. The image is not
/// read in purely geometric modes.
pub fn extract_entry(entry: &ManifestEntry, config: &ExtractionConfig) -> Result<SampleFeatures, Error> {
    let landmarks = load_landmarks(&entry.landmarks)?;
    let image = if config.mode.uses_appearance() {
        Some(load_image(&entry.image)?)
    } else {
        None
    };
    extract_from_parts(image.as_ref(), &landmarks, config)
}

/// Row-per-sample feature matrices, one per block.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub geometric: Array2<f64>,
    pub appearance: Array2<f64>,
}

impl FeatureTable {
    /// Stacks samples; every sample must have the same block widths.
    pub fn from_samples(samples: &[SampleFeatures]) -> FeatureTable {
        let n = samples.len();
        let g = samples.first().map_or(0, |s| s.geometric.len());
        let a = samples.first().map_or(0, |s| s.appearance.len());
        let mut geometric = Array2::zeros((n, g));
        let mut appearance = Array2::zeros((n, a));
        for (i, s) in samples.iter().enumerate() {
            assert_eq!(s.geometric.len(), g, "ragged geometric block");
            assert_eq!(s.appearance.len(), a, "ragged appearance block");
            geometric.row_mut(i).assign(&ndarray::aview1(&s.geometric));
            appearance.row_mut(i).assign(&ndarray::aview1(&s.appearance));
        }
        FeatureTable {
            geometric,
            appearance,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.geometric.nrows()
    }

    /// A view using only the blocks `mode` asks for.
    pub fn view_for(&self, mode: FeatureMode) -> FeatureView<'_> {
        let n = self.n_samples();
        let g = if mode.uses_geometry() {
            self.geometric.view()
        } else {
            self.geometric.slice(ndarray::s![.., ..0])
        };
        let a = if mode.uses_appearance() {
            self.appearance.view()
        } else {
            self.appearance.slice(ndarray::s![.., ..0])
        };
        FeatureView::new(g, a, (0..n).collect())
    }
}

/// A row subset of a geometric block and an appearance block, seen as one
/// matrix with the geometric columns first.
#[derive(Debug, Clone)]
pub struct FeatureView<'a> {
    geometric: ArrayView2<'a, f64>,
    appearance: ArrayView2<'a, f64>,
    rows: Vec<usize>,
}

impl<'a> FeatureView<'a> {
    pub fn new(geometric: ArrayView2<'a, f64>, appearance: ArrayView2<'a, f64>, rows: Vec<usize>) -> Self {
        assert_eq!(geometric.nrows(), appearance.nrows(), "blocks must share rows");
        assert!(rows.iter().all(|&r| r < geometric.nrows()), "row out of range");
        FeatureView {
            geometric,
            appearance,
            rows,
        }
    }

    /// Single-block view over all rows of `matrix`.
    pub fn from_matrix(matrix: ArrayView2<'a, f64>) -> Self {
        let n = matrix.nrows();
        let empty = matrix.slice_move(ndarray::s![.., ..0]);
        FeatureView::new(matrix, empty, (0..n).collect())
    }

    pub fn with_rows(&self, rows: Vec<usize>) -> FeatureView<'a> {
        let mapped = rows.iter().map(|&r| self.rows[r]).collect();
        FeatureView::new(self.geometric, self.appearance, mapped)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn geometric_dim(&self) -> usize {
        self.geometric.ncols()
    }

    pub fn appearance_dim(&self) -> usize {
        self.appearance.ncols()
    }

    pub fn n_cols(&self) -> usize {
        self.geometric.ncols() + self.appearance.ncols()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        let r = self.rows[row];
        let g = self.geometric.ncols();
        if col < g {
            self.geometric[[r, col]]
        } else {
            self.appearance[[r, col - g]]
        }
    }

    /// Writes columns `c0..c1` feature-major into `out`
    /// (`out[(c - c0) * n_rows + row]`).
    pub fn fill_columns(&self, c0: usize, c1: usize, out: &mut [f64]) {
        let n = self.rows.len();
        let g = self.geometric.ncols();
        assert!(out.len() >= (c1 - c0) * n);
        for (ri, &r) in self.rows.iter().enumerate() {
            let mut put = |block: &ArrayView2<f64>, from: usize, to: usize, shift: usize| {
                let row = block.row(r);
                for c in from..to {
                    out[(c + shift - c0) * n + ri] = row[c];
                }
            };
            if c0 < g {
                put(&self.geometric, c0, c1.min(g), 0);
            }
            if c1 > g {
                put(&self.appearance, c0.max(g) - g, c1 - g, g);
            }
        }
    }

    /// Dense `rows x selected` matrix with the given global column indices.
    pub fn gather(&self, columns: &[usize]) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows.len(), columns.len()));
        for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
            for (j, &c) in columns.iter().enumerate() {
                row[j] = self.get(i, c);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn view_concatenates_blocks() {
        let g = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let a = array![[10.0], [20.0], [30.0]];
        let v = FeatureView::new(g.view(), a.view(), vec![2, 0]);
        assert_eq!(v.n_cols(), 3);
        assert_eq!(v.get(0, 2), 30.0);
        assert_eq!(v.get(1, 1), 2.0);
        let mut buf = vec![0.0; 6];
        v.fill_columns(0, 3, &mut buf);
        assert_eq!(buf, vec![5.0, 1.0, 6.0, 2.0, 30.0, 10.0]);
        let mut buf = vec![0.0; 4];
        v.fill_columns(1, 3, &mut buf);
        assert_eq!(buf, vec![6.0, 2.0, 30.0, 10.0]);
        assert_eq!(v.gather(&[2, 0]), array![[30.0, 5.0], [10.0, 1.0]]);
        let sub = v.with_rows(vec![1]);
        assert_eq!(sub.get(0, 0), 1.0);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("vector_lengths".parse::<FeatureMode>(), Ok(FeatureMode::VectorLengths));
        assert_eq!("HYBRID".parse::<FeatureMode>(), Ok(FeatureMode::Hybrid));
        assert!("lbp".parse::<FeatureMode>().is_err());
        assert_eq!(ExtractionConfig::new(FeatureMode::Hybrid).appearance_dim(), 79524);
        assert_eq!(ExtractionConfig::new(FeatureMode::Iva).appearance_dim(), 0);
    }
}
