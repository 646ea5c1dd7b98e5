//! The deployable model: selection mask, standardiser and the fifteen
//! pairwise machines, plus the extraction settings they were trained with.
//!
//! File layout (all integers and floats little-endian):
//!
//! ```text
//! "SENTMDL1"  u32 version  u32 header_len  header (JSON)
//! f64[dim] mean  f64[dim] std
//! per machine: f64 bias, u64 n_sv, u64[n_sv] support rows,
//!              f64[n_sv] dual coefficients, f64[n_sv * dim] support vectors,
//!              u8 has_weights, f64[dim] weights (if present)
//! u32 CRC32 of every preceding byte
//! ```

use std::path::Path;

use ndarray::{aview1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{
    train_oao, BinarySvm, Kernel, OaoEnsemble, PairMachine, Prediction, Standardizer, SvmParams,
};
use crate::data::Expression;
use crate::features::{ExtractionConfig, FeatureView, SampleFeatures};
use crate::selection::{apply_mask, select_features_oaa, SelectedFeatures, SelectionConfig};

pub const MODEL_MAGIC: &[u8; 8] = b"SENTMDL1";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model file version {found} is not supported (expected {MODEL_VERSION})")]
    VersionMismatch { found: u32 },
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Everything needed to go from images to a trained model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub extraction: ExtractionConfig,
    pub selection: SelectionConfig,
    pub svm: SvmParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OaoModel {
    pub version: u32,
    pub config: PipelineConfig,
    pub mask: SelectedFeatures,
    pub standardizer: Standardizer,
    pub ensemble: OaoEnsemble,
}

/// Selection, standardisation and OAO training on the rows of `view`.
/// Nothing outside `view` is read.
pub fn fit_pipeline(view: &FeatureView, labels: &[Expression], config: &PipelineConfig) -> Result<OaoModel, crate::Error> {
    let mask = select_features_oaa(view, labels, &config.selection)?;
    let reduced = view.gather(&mask.global_columns());
    let standardizer = Standardizer::fit(reduced.view())?;
    let x = standardizer.transform(reduced.view())?;
    let ensemble = train_oao(x.view(), labels, &config.svm)?;
    Ok(OaoModel {
        version: MODEL_VERSION,
        config: *config,
        mask,
        standardizer,
        ensemble,
    })
}

impl OaoModel {
    /// Input width expected by [`OaoModel::predict`].
    pub fn reduced_dim(&self) -> usize {
        self.mask.len()
    }

    /// Classifies a mask-reduced (unstandardised) feature vector.
    pub fn predict(&self, reduced: &[f64]) -> Result<Prediction, crate::Error> {
        if reduced.len() != self.reduced_dim() {
            return Err(crate::classifier::ClassifierError::DimensionMismatch {
                expected: self.reduced_dim(),
                found: reduced.len(),
            }
            .into());
        }
        let z = self.standardizer.transform_row(aview1(reduced));
        Ok(self.ensemble.predict(aview1(&z))?)
    }

    /// Masks full per-sample features and classifies them.
    pub fn predict_sample(&self, features: &SampleFeatures) -> Result<Prediction, crate::Error> {
        let reduced = apply_mask(&features.geometric, &features.appearance, &self.mask)?;
        self.predict(&reduced)
    }

    /// Classifies row `row` of a full-width view.
    pub fn predict_row(&self, view: &FeatureView, row: usize) -> Result<Prediction, crate::Error> {
        let reduced: Vec<f64> = self
            .mask
            .global_columns()
            .iter()
            .map(|&c| view.get(row, c))
            .collect();
        self.predict(&reduced)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.config,
            mask: self.mask.clone(),
            dim: self.reduced_dim(),
            machines: self
                .ensemble
                .machines
                .iter()
                .map(|m| MachineHeader {
                    positive: m.positive,
                    negative: m.negative,
                    kernel: m.svm.kernel,
                    converged: m.svm.converged,
                    iterations: m.svm.iterations,
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header).expect("header serialises");
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        put_f64s(&mut out, &self.standardizer.mean);
        put_f64s(&mut out, &self.standardizer.std);
        for m in &self.ensemble.machines {
            let svm = &m.svm;
            put_f64s(&mut out, &[svm.bias]);
            out.extend_from_slice(&(svm.support_indices.len() as u64).to_le_bytes());
            for &i in &svm.support_indices {
                out.extend_from_slice(&(i as u64).to_le_bytes());
            }
            put_f64s(&mut out, &svm.dual_coef);
            put_f64s(&mut out, svm.support_vectors.as_slice().expect("standard layout"));
            match &svm.weights {
                Some(w) => {
                    out.push(1);
                    put_f64s(&mut out, w);
                }
                None => out.push(0),
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<OaoModel, ModelError> {
        let corrupt = |m: &str| ModelError::CorruptModel(m.to_string());
        if bytes.len() < 8 + 4 + 4 + 4 {
            return Err(corrupt("file too short"));
        }
        if &bytes[..8] != MODEL_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != MODEL_VERSION {
            return Err(ModelError::VersionMismatch { found: version });
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(trailer.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(corrupt("checksum mismatch"));
        }

        let mut cur = Cursor { buf: body, pos: 12 };
        let header_len = cur.u32()? as usize;
        let header: Header = serde_json::from_slice(cur.take(header_len)?)
            .map_err(|e| ModelError::CorruptModel(format!("header: {e}")))?;
        let dim = header.dim;
        if header.mask.len() != dim {
            return Err(corrupt("mask size does not match model dimension"));
        }
        let mean = cur.f64s(dim)?;
        let std = cur.f64s(dim)?;
        let mut machines = Vec::with_capacity(header.machines.len());
        for mh in &header.machines {
            let bias = cur.f64s(1)?[0];
            let n_sv = cur.u64()? as usize;
            if n_sv > body.len() {
                return Err(corrupt("support vector count out of range"));
            }
            let support_indices = (0..n_sv)
                .map(|_| cur.u64().map(|v| v as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let dual_coef = cur.f64s(n_sv)?;
            let sv = cur.f64s(n_sv * dim)?;
            let weights = match cur.take(1)?[0] {
                0 => None,
                1 => Some(cur.f64s(dim)?),
                _ => return Err(corrupt("bad weight flag")),
            };
            machines.push(PairMachine {
                positive: mh.positive,
                negative: mh.negative,
                svm: BinarySvm {
                    kernel: mh.kernel,
                    support_vectors: Array2::from_shape_vec((n_sv, dim), sv)
                        .map_err(|e| ModelError::CorruptModel(e.to_string()))?,
                    support_indices,
                    dual_coef,
                    bias,
                    weights,
                    converged: mh.converged,
                    iterations: mh.iterations,
                },
            });
        }
        if cur.pos != body.len() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(OaoModel {
            version,
            config: header.config,
            mask: header.mask,
            standardizer: Standardizer { mean, std },
            ensemble: OaoEnsemble { machines },
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: PipelineConfig,
    mask: SelectedFeatures,
    dim: usize,
    machines: Vec<MachineHeader>,
}

#[derive(Serialize, Deserialize)]
struct MachineHeader {
    positive: Expression,
    negative: Expression,
    kernel: Kernel,
    converged: bool,
    iterations: usize,
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| ModelError::CorruptModel("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, ModelError> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| ModelError::CorruptModel("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn save_model(model: &OaoModel, path: &Path) -> Result<(), ModelError> {
    std::fs::write(path, model.to_bytes())?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<OaoModel, ModelError> {
    OaoModel::from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureMode;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_model(kernel: Kernel) -> (OaoModel, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n_per = 6;
        let mut x = Array2::zeros((6 * n_per, 10));
        let mut labels = Vec::new();
        for c in 0..6 {
            for k in 0..n_per {
                let r = c * n_per + k;
                for j in 0..10 {
                    x[[r, j]] = rng.random::<f64>() + if j == c { 3.0 } else { 0.0 };
                }
                labels.push(Expression::ALL[c]);
            }
        }
        let g = x.slice(ndarray::s![.., ..6]);
        let a = x.slice(ndarray::s![.., 6..]);
        let view = FeatureView::new(g, a, (0..x.nrows()).collect());
        let config = PipelineConfig {
            extraction: ExtractionConfig::new(FeatureMode::Hybrid),
            selection: SelectionConfig::with_estimators(10),
            svm: SvmParams {
                kernel,
                ..SvmParams::default()
            },
        };
        (fit_pipeline(&view, &labels, &config).unwrap(), x)
    }

    #[test]
    fn round_trip_is_bit_identical() {
        for kernel in [Kernel::Linear, Kernel::Rbf { gamma: None }] {
            let (model, _) = toy_model(kernel);
            let bytes = model.to_bytes();
            let back = OaoModel::from_bytes(&bytes).unwrap();
            assert_eq!(back, model);
            assert_eq!(back.to_bytes(), bytes);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            for _ in 0..100 {
                let v: Vec<f64> = (0..model.reduced_dim()).map(|_| rng.random::<f64>() * 4.0).collect();
                let a = model.ensemble.decisions(aview1(&model.standardizer.transform_row(aview1(&v)))).unwrap();
                let b = back.ensemble.decisions(aview1(&back.standardizer.transform_row(aview1(&v)))).unwrap();
                assert_eq!(model.predict(&v).unwrap(), back.predict(&v).unwrap());
                for (x, y) in a.iter().zip(&b) {
                    assert_eq!(x.2.to_bits(), y.2.to_bits());
                }
            }
        }
    }

    #[test]
    fn file_errors() {
        let (model, _) = toy_model(Kernel::Linear);
        let bytes = model.to_bytes();
        assert!(matches!(
            OaoModel::from_bytes(&bytes[..bytes.len() - 9]),
            Err(ModelError::CorruptModel(_))
        ));
        assert!(matches!(OaoModel::from_bytes(&bytes[..10]), Err(ModelError::CorruptModel(_))));
        let mut v0 = bytes.clone();
        v0[8..12].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(
            OaoModel::from_bytes(&v0),
            Err(ModelError::VersionMismatch { found: 0 })
        ));
        let mut flipped = bytes.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 0x40;
        assert!(matches!(OaoModel::from_bytes(&flipped), Err(ModelError::CorruptModel(_))));
    }

    #[test]
    fn predict_checks_dimension() {
        let (model, x) = toy_model(Kernel::Linear);
        assert!(model.predict(&[1.0]).is_err());
        let row = x.row(0).to_vec();
        let s = SampleFeatures {
            geometric: row[..6].to_vec(),
            appearance: row[6..].to_vec(),
        };
        assert_eq!(model.predict_sample(&s).unwrap().label, Expression::Anger);
    }
}
