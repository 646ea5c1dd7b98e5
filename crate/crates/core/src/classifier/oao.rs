//! One-against-one decomposition over the six expressions.

use ndarray::{ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::Serialize;

use super::svm::{train_binary_svm, BinarySvm, SvmParams};
use super::ClassifierError;
use crate::data::Expression;

/// Machine separating `positive` (decision > 0) from `negative`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMachine {
    pub positive: Expression,
    pub negative: Expression,
    pub svm: BinarySvm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OaoEnsemble {
    pub machines: Vec<PairMachine>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Prediction {
    pub label: Expression,
    pub votes: [usize; Expression::COUNT],
}

/// All unordered class pairs `(a, b)` with `a < b`, lexicographic.
pub fn class_pairs() -> Vec<(Expression, Expression)> {
    let mut pairs = Vec::with_capacity(15);
    for (i, &a) in Expression::ALL.iter().enumerate() {
        for &b in &Expression::ALL[i + 1..] {
            pairs.push((a, b));
        }
    }
    pairs
}

/// Trains one machine per class pair on the rows of those two classes.
pub fn train_oao(x: ArrayView2<f64>, labels: &[Expression], params: &SvmParams) -> Result<OaoEnsemble, ClassifierError> {
    if x.nrows() != labels.len() {
        return Err(ClassifierError::LengthMismatch(x.nrows(), labels.len()));
    }
    for class in Expression::ALL {
        if !labels.contains(&class) {
            return Err(ClassifierError::MissingClass(class));
        }
    }
    let machines: Result<Vec<PairMachine>, ClassifierError> = class_pairs()
        .into_par_iter()
        .map(|(a, b)| {
            let rows: Vec<usize> = (0..labels.len())
                .filter(|&i| labels[i] == a || labels[i] == b)
                .collect();
            let sub = x.select(Axis(0), &rows);
            let y: Vec<f64> = rows
                .iter()
                .map(|&i| if labels[i] == a { 1.0 } else { -1.0 })
                .collect();
            let mut svm = train_binary_svm(sub.view(), &y, params)?;
            // report support indices in terms of the full training matrix
            svm.support_indices = svm.support_indices.iter().map(|&r| rows[r]).collect();
            Ok(PairMachine {
                positive: a,
                negative: b,
                svm,
            })
        })
        .collect();
    Ok(OaoEnsemble { machines: machines? })
}

/// Majority vote over pairwise decisions. A zero decision counts for the
/// positive class. Ties go to the class with the largest summed `|f|` over
/// all machines it takes part in, then to the lowest class index.
pub fn majority_vote(decisions: &[(Expression, Expression, f64)]) -> Prediction {
    let mut votes = [0usize; Expression::COUNT];
    let mut strength = [0.0f64; Expression::COUNT];
    for &(pos, neg, f) in decisions {
        let winner = if f >= 0.0 { pos } else { neg };
        votes[winner.index()] += 1;
        strength[pos.index()] += f.abs();
        strength[neg.index()] += f.abs();
    }
    let mut best = 0;
    for c in 1..Expression::COUNT {
        let better = votes[c] > votes[best] || (votes[c] == votes[best] && strength[c] > strength[best]);
        if better {
            best = c;
        }
    }
    Prediction {
        label: Expression::ALL[best],
        votes,
    }
}

impl OaoEnsemble {
    pub fn dim(&self) -> usize {
        self.machines.first().map_or(0, |m| m.svm.dim())
    }

    pub fn decisions(&self, x: ArrayView1<f64>) -> Result<Vec<(Expression, Expression, f64)>, ClassifierError> {
        if x.len() != self.dim() {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(self
            .machines
            .iter()
            .map(|m| (m.positive, m.negative, m.svm.decision(x)))
            .collect())
    }

    pub fn predict(&self, x: ArrayView1<f64>) -> Result<Prediction, ClassifierError> {
        Ok(majority_vote(&self.decisions(x)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn clusters() -> (Array2<f64>, Vec<Expression>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, class) in Expression::ALL.iter().enumerate() {
            let angle = c as f64 * std::f64::consts::TAU / 6.0;
            for k in 0..6 {
                let jitter = (k as f64 - 2.5) * 0.05;
                rows.push([10.0 * angle.cos() + jitter, 10.0 * angle.sin() - jitter]);
                labels.push(*class);
            }
        }
        let x = Array2::from_shape_fn((rows.len(), 2), |(i, j)| rows[i][j]);
        (x, labels)
    }

    #[test]
    fn fifteen_machines_each_class_in_five() {
        let (x, labels) = clusters();
        let e = train_oao(x.view(), &labels, &SvmParams::default()).unwrap();
        assert_eq!(e.machines.len(), 15);
        for class in Expression::ALL {
            let n = e
                .machines
                .iter()
                .filter(|m| m.positive == class || m.negative == class)
                .count();
            assert_eq!(n, 5);
        }
        for m in &e.machines {
            for &i in &m.svm.support_indices {
                assert!(labels[i] == m.positive || labels[i] == m.negative);
            }
        }
    }

    #[test]
    fn separated_clusters_vote_unanimously() {
        let (x, labels) = clusters();
        let e = train_oao(x.view(), &labels, &SvmParams::default()).unwrap();
        for (row, &label) in x.rows().into_iter().zip(&labels) {
            let p = e.predict(row).unwrap();
            assert_eq!(p.label, label);
            assert_eq!(p.votes[label.index()], 5);
            assert_eq!(p.votes.iter().sum::<usize>(), 15);
        }
        let happy = Expression::Happy.index() as f64 * std::f64::consts::TAU / 6.0;
        let p = e.predict(array![10.0 * happy.cos(), 10.0 * happy.sin()].view()).unwrap();
        assert_eq!(p.label, Expression::Happy);
        assert!(matches!(
            e.predict(array![1.0].view()),
            Err(ClassifierError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn missing_class() {
        let x = Array2::zeros((5, 1));
        let labels = Expression::ALL[..5].to_vec();
        assert!(matches!(
            train_oao(x.view(), &labels, &SvmParams::default()),
            Err(ClassifierError::MissingClass(Expression::Surprise))
        ));
    }

    fn cyclic_decisions(scale: f64, mags: [f64; 3]) -> Vec<(Expression, Expression, f64)> {
        // Anger > Disgust > Fear > Anger, all three beat the rest.
        use Expression::*;
        class_pairs()
            .into_iter()
            .map(|(a, b)| {
                let f = match (a, b) {
                    (Anger, Disgust) => mags[0],
                    (Disgust, Fear) => mags[1],
                    (Anger, Fear) => -mags[2],
                    (a, _) if a.index() < 3 => 1.0,
                    (Happy, Sad) | (Sad, Surprise) => 1.0,
                    _ => -1.0,
                };
                (a, b, scale * f)
            })
            .collect()
    }

    #[test]
    fn three_way_tie_breaks_on_decision_magnitude() {
        let p = majority_vote(&cyclic_decisions(1.0, [0.5, 0.5, 3.0]));
        assert_eq!(&p.votes[..3], &[4, 4, 4]);
        // Anger: 0.5 + 3 + 3; Disgust: 0.5 + 0.5 + 3; Fear: 0.5 + 3 + 3 -> Anger by index
        assert_eq!(p.label, Expression::Anger);
        let p = majority_vote(&cyclic_decisions(1.0, [0.5, 2.0, 0.5]));
        // Anger 4, Disgust 5.5, Fear 5.5 -> Disgust (lower index among equals)
        assert_eq!(p.label, Expression::Disgust);
        let p = majority_vote(&cyclic_decisions(1.0, [0.2, 0.5, 0.9]));
        assert_eq!(p.label, Expression::Fear);
        for s in [1e-3, 0.7, 42.0] {
            assert_eq!(majority_vote(&cyclic_decisions(s, [0.2, 0.5, 0.9])).label, Expression::Fear);
        }
    }
}
