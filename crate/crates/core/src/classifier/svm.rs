//! Soft-margin binary SVM trained with SMO.
//!
//! Working-set selection follows the second-order rule of Fan, Chen and Lin
//! (maximal violating `i`, then the `j` with the largest guaranteed
//! objective decrease). Training stops when the maximal KKT violation gap
//! `m(a) - M(a)` drops below the tolerance, which bounds every
//! `|y_i f(x_i) - 1|` condition by the same tolerance.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::ClassifierError;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Kernel {
    Linear,
    /// `exp(-gamma * |x - z|^2)`; `None` means `1 / dim` at training time.
    Rbf { gamma: Option<f64> },
}

impl Kernel {
    pub fn resolve(self, dim: usize) -> Kernel {
        match self {
            Kernel::Rbf { gamma: None } => Kernel::Rbf {
                gamma: Some(1.0 / dim.max(1) as f64),
            },
            k => k,
        }
    }

    #[inline]
    pub fn eval(&self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
        match *self {
            Kernel::Linear => a.dot(&b),
            Kernel::Rbf { gamma } => {
                let g = gamma.expect("rbf gamma resolved before evaluation");
                let d2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
                (-g * d2).exp()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub kernel: Kernel,
    pub c: f64,
    /// KKT tolerance.
    pub tolerance: f64,
    /// Cap on SMO iterations.
    pub max_passes: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            kernel: Kernel::Linear,
            c: 1.0,
            tolerance: 1e-3,
            max_passes: 1_000_000,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(ClassifierError::InvalidParams("C must be > 0".into()));
        }
        if let Kernel::Rbf { gamma: Some(g) } = self.kernel {
            if !(g > 0.0 && g.is_finite()) {
                return Err(ClassifierError::InvalidParams("gamma must be > 0".into()));
            }
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(ClassifierError::InvalidParams("tolerance must be > 0".into()));
        }
        if self.max_passes == 0 {
            return Err(ClassifierError::InvalidParams("max_passes must be >= 1".into()));
        }
        Ok(())
    }
}

/// A trained two-class machine. `f(x) > 0` means the positive class.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub kernel: Kernel,
    pub support_vectors: Array2<f64>,
    /// Row of each support vector in the training matrix.
    pub support_indices: Vec<usize>,
    /// `alpha_i * y_i` per support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    /// `sum alpha_i y_i x_i`, present for the linear kernel.
    pub weights: Option<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
}

impl BinarySvm {
    pub fn dim(&self) -> usize {
        self.support_vectors.ncols()
    }

    /// `sum alpha_i y_i K(x_i, x) + b`, always through the kernel.
    pub fn kernel_decision(&self, x: ArrayView1<f64>) -> f64 {
        self.support_vectors
            .axis_iter(Axis(0))
            .zip(&self.dual_coef)
            .map(|(sv, &coef)| coef * self.kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias
    }

    /// Decision value; uses the explicit weight vector when available.
    pub fn decision(&self, x: ArrayView1<f64>) -> f64 {
        match &self.weights {
            Some(w) => ndarray::aview1(w).dot(&x) + self.bias,
            None => self.kernel_decision(x),
        }
    }
}

fn kernel_matrix(x: ArrayView2<f64>, kernel: &Kernel) -> Array2<f64> {
    let n = x.nrows();
    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(x.row(i), x.row(j));
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}

/// Solves the C-SVM dual for labels `y` in {-1, +1}.
pub fn train_binary_svm(x: ArrayView2<f64>, y: &[f64], params: &SvmParams) -> Result<BinarySvm, ClassifierError> {
    params.validate()?;
    let n = x.nrows();
    if y.len() != n {
        return Err(ClassifierError::LengthMismatch(n, y.len()));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(ClassifierError::InvalidLabels);
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(ClassifierError::SingleClassInput);
    }
    let kernel = params.kernel.resolve(x.ncols());
    let k = kernel_matrix(x, &kernel);
    let c = params.c;
    let eps = params.tolerance;

    let mut alpha = vec![0.0f64; n];
    let mut grad = vec![-1.0f64; n];
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;

    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_passes {
        // select i: maximal -y_t G_t over I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let in_up = if y[t] > 0.0 { !upper(alpha[t]) } else { !lower(alpha[t]) };
            if in_up && v > gmax {
                gmax = v;
                i_sel = Some(t);
            }
        }
        // select j: second-order gain over I_low
        let mut gmin = f64::INFINITY;
        let mut j_sel = None;
        let mut best_obj = f64::INFINITY;
        if let Some(i) = i_sel {
            for t in 0..n {
                let in_low = if y[t] > 0.0 { !lower(alpha[t]) } else { !upper(alpha[t]) };
                if !in_low {
                    continue;
                }
                let v = -y[t] * grad[t];
                if v < gmin {
                    gmin = v;
                }
                let b = gmax - v;
                if b > 0.0 {
                    let mut a = k[[i, i]] + k[[t, t]] - 2.0 * k[[i, t]];
                    if a <= 0.0 {
                        a = TAU;
                    }
                    let obj = -(b * b) / a;
                    if obj < best_obj {
                        best_obj = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        let (i, j) = match (i_sel, j_sel) {
            (Some(i), Some(j)) if gmax - gmin >= eps => (i, j),
            _ => {
                converged = true;
                break;
            }
        };
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let q_ij = y[i] * y[j] * k[[i, j]];
        if y[i] != y[j] {
            let mut quad = k[[i, i]] + k[[j, j]] + 2.0 * q_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = k[[i, i]] + k[[j, j]] - 2.0 * q_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k[[i, t]] * di + y[j] * k[[j, t]] * dj);
        }
    }
    if !converged {
        log::warn!(
            "SMO did not converge within {} iterations; keeping best-so-far solution",
            params.max_passes
        );
    }

    // f(x) = sum alpha_j y_j K + b with b = -rho
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free_sum += yg;
            free_count += 1;
        }
    }
    let rho = if free_count > 0 {
        free_sum / free_count as f64
    } else {
        0.5 * (ub + lb)
    };
    let bias = -rho;

    let support_indices: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    let dual_coef: Vec<f64> = support_indices.iter().map(|&t| alpha[t] * y[t]).collect();
    let support_vectors = x.select(Axis(0), &support_indices);
    let weights = match kernel {
        Kernel::Linear => {
            let mut w = vec![0.0; x.ncols()];
            for (sv, &coef) in support_vectors.axis_iter(Axis(0)).zip(&dual_coef) {
                for (wk, xk) in w.iter_mut().zip(sv.iter()) {
                    *wk += coef * xk;
                }
            }
            Some(w)
        }
        Kernel::Rbf { .. } => None,
    };
    Ok(BinarySvm {
        kernel,
        support_vectors,
        support_indices,
        dual_coef,
        bias,
        weights,
        converged,
        iterations,
    })
}

/// Largest violation of the soft-margin KKT conditions on the training
/// data, measured in units of `y_i f(x_i)`.
pub fn kkt_max_violation(svm: &BinarySvm, x: ArrayView2<f64>, y: &[f64], c: f64) -> f64 {
    let mut alpha = vec![0.0; x.nrows()];
    for (&idx, &coef) in svm.support_indices.iter().zip(&svm.dual_coef) {
        alpha[idx] = coef.abs();
    }
    let mut worst = 0.0f64;
    for (i, row) in x.axis_iter(Axis(0)).enumerate() {
        let margin = y[i] * svm.kernel_decision(row);
        let v = if alpha[i] <= 0.0 {
            (1.0 - margin).max(0.0)
        } else if alpha[i] >= c {
            (margin - 1.0).max(0.0)
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst
}
