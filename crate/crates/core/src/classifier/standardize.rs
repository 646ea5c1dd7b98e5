use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::ClassifierError;

/// Lower bound on stored standard deviations.
pub const STD_FLOOR: f64 = 1e-12;

/// Per-feature mean and (population) standard deviation.
///
/// Columns whose deviation sits at the floor carry no information on the
/// fitting data and are mapped to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<f64>) -> Result<Standardizer, ClassifierError> {
        let n = x.nrows();
        if n < 2 {
            return Err(ClassifierError::TooFewSamples(n));
        }
        let mut mean = Vec::with_capacity(x.ncols());
        let mut std = Vec::with_capacity(x.ncols());
        for col in x.axis_iter(Axis(1)) {
            let m = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            mean.push(m);
            std.push(var.sqrt().max(STD_FLOOR));
        }
        Ok(Standardizer { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_row(&self, row: ArrayView1<f64>) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&v, (&m, &s))| if s <= STD_FLOOR { 0.0 } else { (v - m) / s })
            .collect()
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, ClassifierError> {
        if x.ncols() != self.dim() {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim(),
                found: x.ncols(),
            });
        }
        let mut out = Array2::zeros(x.raw_dim());
        for (src, mut dst) in x.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
            dst.assign(&ndarray::aview1(&self.transform_row(src)));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn examples() {
        let x = array![[1.0, 5.0], [3.0, 5.0]];
        let s = Standardizer::fit(x.view()).unwrap();
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.std, vec![1.0, STD_FLOOR]);
        let t = s.transform(x.view()).unwrap();
        assert_eq!(t, array![[-1.0, 0.0], [1.0, 0.0]]);
        assert_eq!(s.transform_row(array![2.0, 7.0].view()), vec![0.0, 0.0]);
    }

    #[test]
    fn moments_after_transform() {
        let x = Array2::from_shape_fn((37, 4), |(i, j)| ((i * 13 + j * 7) % 17) as f64 * (j + 1) as f64 - 3.0);
        let s = Standardizer::fit(x.view()).unwrap();
        let t = s.transform(x.view()).unwrap();
        for col in t.axis_iter(Axis(1)) {
            let m = col.sum() / 37.0;
            let v = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 37.0;
            assert!(m.abs() < 1e-9);
            assert!((v - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(
            Standardizer::fit(array![[1.0]].view()),
            Err(ClassifierError::TooFewSamples(1))
        ));
        let s = Standardizer::fit(array![[1.0], [2.0]].view()).unwrap();
        assert!(matches!(
            s.transform(array![[1.0, 2.0]].view()),
            Err(ClassifierError::DimensionMismatch { .. })
        ));
    }
}
