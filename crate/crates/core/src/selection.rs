//! Boosted feature selection.
//!
//! Each one-against-all sub-problem runs real-valued AdaBoost (SAMME.R in
//! its two-class form) with decision stumps as weak learners. Every stump
//! credits its feature with the weighted Gini decrease of its split; the
//! top-k features of each sub-problem are kept and the union over the six
//! sub-problems forms the selection mask.
//!
//! Stump search runs on pre-binned columns: for each feature the candidate
//! thresholds are the midpoints between consecutive distinct training
//! values (at most [`SelectionConfig::max_thresholds`], taken at evenly
//! spaced quantiles), and every sample is replaced by the number of
//! candidates strictly below its value. A split at candidate `k` then sends
//! codes `<= k` left, so one pass over the codes builds the weighted class
//! histogram and one pass over the buckets scores every threshold.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Expression;
use crate::features::FeatureView;

/// Laplace smoothing added to leaf class weights.
pub const LEAF_SMOOTHING: f64 = 1e-6;
/// Boosting stops once a stump's weighted training error drops below this.
pub const PERFECT_FIT_ERROR: f64 = 1e-10;

const COLUMN_CHUNK: usize = 256;

/// Bucket codes and per-column threshold counts for one chunk of columns.
type ChunkCodes = (Vec<u16>, Vec<u16>);

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("binary sub-problem has only one class present")]
    SingleClassInput,
    #[error("class {0} has no samples")]
    MissingClass(Expression),
    #[error("sample weights must be positive and finite")]
    InvalidWeights,
    #[error("input has {0} rows but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFiniteFeature { row: usize, col: usize },
    #[error("mask does not fit vector: {0}")]
    DimensionMismatch(String),
    #[error("invalid selection config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Maximum boosting rounds per sub-problem.
    pub estimators: usize,
    /// Features kept per sub-problem.
    pub top_k: usize,
    /// Cap on threshold candidates per feature.
    pub max_thresholds: usize,
    /// Recorded with the mask. Candidate subsampling is deterministic, so
    /// the seed does not currently influence the result.
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig::with_estimators(100)
    }
}

impl SelectionConfig {
    /// `estimators` rounds, keeping every feature a weak learner used.
    pub fn with_estimators(estimators: usize) -> SelectionConfig {
        SelectionConfig {
            estimators,
            top_k: estimators,
            max_thresholds: 256,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SelectionError> {
        if self.estimators < 1 {
            return Err(SelectionError::InvalidConfig("estimators must be >= 1".into()));
        }
        if self.top_k < 1 {
            return Err(SelectionError::InvalidConfig("top_k must be >= 1".into()));
        }
        if self.max_thresholds < 1 || self.max_thresholds > u16::MAX as usize - 1 {
            return Err(SelectionError::InvalidConfig("max_thresholds out of range".into()));
        }
        Ok(())
    }
}

/// Smoothed class probabilities of one leaf.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafProbs {
    pub negative: f64,
    pub positive: f64,
}

impl LeafProbs {
    fn from_weights(pos: f64, neg: f64) -> LeafProbs {
        let total = pos + neg + 2.0 * LEAF_SMOOTHING;
        LeafProbs {
            negative: (neg + LEAF_SMOOTHING) / total,
            positive: (pos + LEAF_SMOOTHING) / total,
        }
    }

    /// SAMME.R contribution `0.5 * (ln p+ - ln p-)`.
    pub fn half_log_odds(&self) -> f64 {
        0.5 * (self.positive.ln() - self.negative.ln())
    }
}

/// Depth-one tree: `x[feature] <= threshold` goes left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub left: LeafProbs,
    pub right: LeafProbs,
    /// Weighted Gini impurity of the split (sum over both leaves).
    pub impurity: f64,
}

impl Stump {
    pub fn goes_left(&self, value: f64) -> bool {
        value <= self.threshold
    }

    pub fn half_log_odds(&self, value: f64) -> f64 {
        if self.goes_left(value) {
            self.left.half_log_odds()
        } else {
            self.right.half_log_odds()
        }
    }

    pub fn predict(&self, value: f64) -> bool {
        self.half_log_odds(value) > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble {
    pub stumps: Vec<Stump>,
    /// Accumulated impurity decrease per feature.
    pub scores: BTreeMap<usize, f64>,
}

impl BoostedEnsemble {
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.stumps.iter().map(|s| s.half_log_odds(row[s.feature])).sum()
    }

    pub fn predict(&self, row: &[f64]) -> bool {
        self.decision(row) > 0.0
    }

    /// Features ordered by descending score, ties by ascending index; zero
    /// scores excluded.
    pub fn ranked_features(&self) -> Vec<usize> {
        let mut ranked: Vec<(usize, f64)> = self
            .scores
            .iter()
            .filter(|(_, &s)| s > 0.0)
            .map(|(&f, &s)| (f, s))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.into_iter().map(|(f, _)| f).collect()
    }
}

/// Columns reduced to threshold-bucket codes, feature-major.
#[derive(Debug, Clone)]
pub struct BinnedColumns {
    n_rows: usize,
    n_cols: usize,
    codes: Vec<u16>,
    n_thresholds: Vec<u16>,
    max_thresholds: usize,
}

/// Candidate thresholds for one column.
fn candidate_thresholds(values: &[f64], max_thresholds: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    sorted.dedup();
    let mids: Vec<f64> = sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    if mids.len() <= max_thresholds {
        return mids;
    }
    let m = mids.len();
    (0..max_thresholds)
        .map(|j| mids[((2 * j + 1) * m) / (2 * max_thresholds)])
        .collect()
}

impl BinnedColumns {
    pub fn build(view: &FeatureView, max_thresholds: usize) -> Result<BinnedColumns, SelectionError> {
        let n = view.n_rows();
        let d = view.n_cols();
        let chunks: Vec<(usize, usize)> = (0..d)
            .step_by(COLUMN_CHUNK)
            .map(|c0| (c0, (c0 + COLUMN_CHUNK).min(d)))
            .collect();
        let parts: Vec<Result<ChunkCodes, SelectionError>> = chunks
            .par_iter()
            .map(|&(c0, c1)| {
                let mut buf = vec![0.0f64; (c1 - c0) * n];
                view.fill_columns(c0, c1, &mut buf);
                let mut codes = Vec::with_capacity((c1 - c0) * n);
                let mut counts = Vec::with_capacity(c1 - c0);
                for (j, col) in buf.chunks(n.max(1)).take(c1 - c0).enumerate() {
                    if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                        return Err(SelectionError::NonFiniteFeature { row, col: c0 + j });
                    }
                    let thresholds = candidate_thresholds(col, max_thresholds);
                    codes.extend(
                        col.iter()
                            .map(|&v| thresholds.partition_point(|&t| t < v) as u16),
                    );
                    counts.push(thresholds.len() as u16);
                }
                Ok((codes, counts))
            })
            .collect();
        let mut codes = Vec::with_capacity(n * d);
        let mut n_thresholds = Vec::with_capacity(d);
        for part in parts {
            let (c, t) = part?;
            codes.extend(c);
            n_thresholds.extend(t);
        }
        Ok(BinnedColumns {
            n_rows: n,
            n_cols: d,
            codes,
            n_thresholds,
            max_thresholds,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    fn column(&self, f: usize) -> &[u16] {
        &self.codes[f * self.n_rows..(f + 1) * self.n_rows]
    }

    /// Threshold value of candidate `k` for feature `f`, recomputed from
    /// the source view the columns were built from.
    fn threshold_value(&self, view: &FeatureView, f: usize, k: usize) -> f64 {
        let mut col = vec![0.0; self.n_rows];
        view.fill_columns(f, f + 1, &mut col);
        candidate_thresholds(&col, self.max_thresholds)[k]
    }
}

#[derive(Debug, Clone, Copy)]
struct SplitChoice {
    feature: usize,
    /// Candidate index; `None` when no feature has two distinct values.
    split: Option<usize>,
    impurity: f64,
    left_pos: f64,
    left_neg: f64,
}

#[inline]
fn weighted_gini(pos: f64, neg: f64) -> f64 {
    let w = pos + neg;
    if w <= 0.0 {
        0.0
    } else {
        w - (pos * pos + neg * neg) / w
    }
}

/// Binned columns regrouped for one binary labelling: adjacent buckets
/// holding a single class, the same one, are merged. The Gini score is
/// convex along such a run, so an optimal split always sits on one of the
/// remaining class boundaries and nothing is lost.
struct Segmented {
    n_rows: usize,
    codes: Vec<u16>,
    /// Original candidate index of every kept boundary, per feature.
    splits: Vec<u16>,
    offsets: Vec<usize>,
}

impl Segmented {
    fn new(binned: &BinnedColumns, positive: &[bool]) -> Segmented {
        let n = binned.n_rows;
        let parts: Vec<(Vec<u16>, Vec<u16>)> = (0..binned.n_cols)
            .collect::<Vec<_>>()
            .par_chunks(COLUMN_CHUNK)
            .map(|features| {
                let mut codes = Vec::with_capacity(features.len() * n);
                let mut splits = Vec::new();
                let mut lens = Vec::with_capacity(features.len());
                let mut mask = vec![0u8; binned.max_thresholds + 1];
                let mut segment = vec![0u16; binned.max_thresholds + 1];
                for &f in features {
                    let nt = binned.n_thresholds[f] as usize;
                    let column = binned.column(f);
                    mask[..=nt].fill(0);
                    for (&c, &p) in column.iter().zip(positive) {
                        mask[c as usize] |= if p { 1 } else { 2 };
                    }
                    let before = splits.len();
                    let mut id = 0u16;
                    for k in 0..=nt {
                        segment[k] = id;
                        if k < nt {
                            let pure_run = mask[k] == mask[k + 1] && (mask[k] == 1 || mask[k] == 2);
                            if !pure_run {
                                splits.push(k as u16);
                                id += 1;
                            }
                        }
                    }
                    codes.extend(column.iter().map(|&c| segment[c as usize]));
                    lens.push(splits.len() - before);
                }
                let lens: Vec<u16> = lens.into_iter().map(|l| l as u16).collect();
                let mut packed = lens;
                packed.extend(splits);
                (codes, packed)
            })
            .collect();
        let mut codes = Vec::with_capacity(n * binned.n_cols);
        let mut splits = Vec::new();
        let mut offsets = Vec::with_capacity(binned.n_cols + 1);
        offsets.push(0);
        for ((c, packed), features) in parts.into_iter().zip((0..binned.n_cols).collect::<Vec<_>>().chunks(COLUMN_CHUNK)) {
            codes.extend(c);
            let (lens, rest) = packed.split_at(features.len());
            splits.extend_from_slice(rest);
            for &l in lens {
                offsets.push(offsets.last().unwrap() + l as usize);
            }
        }
        Segmented {
            n_rows: n,
            codes,
            splits,
            offsets,
        }
    }

    fn n_cols(&self) -> usize {
        self.offsets.len() - 1
    }
}

/// Finds the impurity-minimising split over all features.
///
/// With the node weight fixed, minimising the summed child impurity is the
/// same as maximising `(lp^2 + ln^2) / lw + (rp^2 + rn^2) / rw`, which is
/// what the scan compares.
fn best_split(seg: &Segmented, positive: &[bool], weights: &[f64]) -> SplitChoice {
    let n = seg.n_rows;
    let (total_pos, total_neg) = class_totals(positive, weights);
    let total = total_pos + total_neg;
    let root = weighted_gini(total_pos, total_neg);
    let fallback = SplitChoice {
        feature: 0,
        split: None,
        impurity: root,
        left_pos: total_pos,
        left_neg: total_neg,
    };
    let pos_weights: Vec<f64> = positive
        .iter()
        .zip(weights)
        .map(|(&p, &w)| if p { w } else { 0.0 })
        .collect();
    let max_segments = (0..seg.n_cols())
        .map(|f| seg.offsets[f + 1] - seg.offsets[f])
        .max()
        .unwrap_or(0)
        + 1;
    // (score, feature, candidate, left_pos, left_weight)
    type Best = (f64, usize, usize, f64, f64);
    let chunk_best: Vec<Option<Best>> = (0..seg.n_cols())
        .collect::<Vec<_>>()
        .par_chunks(COLUMN_CHUNK)
        .map(|features| {
            let mut pos = vec![0.0f64; max_segments];
            let mut tot = vec![0.0f64; max_segments];
            let mut best: Option<Best> = None;
            for &f in features {
                let splits = &seg.splits[seg.offsets[f]..seg.offsets[f + 1]];
                let nb = splits.len();
                if nb == 0 {
                    continue;
                }
                pos[..=nb].fill(0.0);
                tot[..=nb].fill(0.0);
                let codes = &seg.codes[f * n..(f + 1) * n];
                for ((&c, &w), &pw) in codes.iter().zip(weights).zip(&pos_weights) {
                    tot[c as usize] += w;
                    pos[c as usize] += pw;
                }
                // Scores are positive, so -1 loses to any real candidate.
                let mut best_score = best.map_or(-1.0, |b| b.0);
                let (mut lp, mut lw) = (0.0, 0.0);
                for (j, (&p, &t)) in pos[..nb].iter().zip(&tot[..nb]).enumerate() {
                    lp += p;
                    lw += t;
                    let ln = lw - lp;
                    let rp = total_pos - lp;
                    let rw = total - lw;
                    let rn = rw - rp;
                    // score = num / den, compared without dividing
                    let num = (lp * lp + ln * ln) * rw + (rp * rp + rn * rn) * lw;
                    let den = lw * rw;
                    // strict: on ties the earlier feature and threshold win
                    if num > best_score * den && den > 0.0 {
                        best_score = num / den;
                        best = Some((best_score, f, splits[j] as usize, lp, lw));
                    }
                }
            }
            best
        })
        .collect();
    let mut best: Option<Best> = None;
    for c in chunk_best.into_iter().flatten() {
        if best.is_none_or(|b| c.0 > b.0) {
            best = Some(c);
        }
    }
    match best {
        Some((_, feature, k, lp, lw)) => {
            let ln = (lw - lp).max(0.0);
            let impurity =
                weighted_gini(lp, ln) + weighted_gini(total_pos - lp, (total_neg - ln).max(0.0));
            SplitChoice {
                feature,
                split: Some(k),
                impurity,
                left_pos: lp,
                left_neg: ln,
            }
        }
        None => fallback,
    }
}

fn class_totals(positive: &[bool], weights: &[f64]) -> (f64, f64) {
    let mut pos = 0.0;
    let mut neg = 0.0;
    for (&p, &w) in positive.iter().zip(weights) {
        if p {
            pos += w;
        } else {
            neg += w;
        }
    }
    (pos, neg)
}

fn check_binary(positive: &[bool]) -> Result<(), SelectionError> {
    let any_pos = positive.iter().any(|&p| p);
    let any_neg = positive.iter().any(|&p| !p);
    if any_pos && any_neg {
        Ok(())
    } else {
        Err(SelectionError::SingleClassInput)
    }
}

fn stump_from_choice(
    choice: &SplitChoice,
    binned: &BinnedColumns,
    view: &FeatureView,
    total_pos: f64,
    total_neg: f64,
) -> Stump {
    let threshold = match choice.split {
        Some(k) => binned.threshold_value(view, choice.feature, k),
        None => f64::INFINITY,
    };
    Stump {
        feature: choice.feature,
        threshold,
        left: LeafProbs::from_weights(choice.left_pos, choice.left_neg),
        right: LeafProbs::from_weights(total_pos - choice.left_pos, total_neg - choice.left_neg),
        impurity: choice.impurity,
    }
}

/// Fits the Gini-optimal stump under sample weights `weights` (positive,
/// summing to 1). Ties go to the lowest feature, then lowest threshold.
pub fn train_stump(x: ArrayView2<f64>, positive: &[bool], weights: &[f64]) -> Result<Stump, SelectionError> {
    if x.nrows() != positive.len() || weights.len() != positive.len() {
        return Err(SelectionError::LengthMismatch(x.nrows(), positive.len()));
    }
    check_binary(positive)?;
    if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(SelectionError::InvalidWeights);
    }
    let view = FeatureView::from_matrix(x);
    let binned = BinnedColumns::build(&view, SelectionConfig::default().max_thresholds)?;
    let choice = best_split(&Segmented::new(&binned, positive), positive, weights);
    let (tp, tn) = class_totals(positive, weights);
    Ok(stump_from_choice(&choice, &binned, &view, tp, tn))
}

/// Two-class SAMME.R on pre-binned columns. `observe` sees the normalised
/// sample weights after every reweighting.
pub fn boost_binned(
    binned: &BinnedColumns,
    view: &FeatureView,
    positive: &[bool],
    config: &SelectionConfig,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<BoostedEnsemble, SelectionError> {
    config.validate()?;
    if positive.len() != binned.n_rows {
        return Err(SelectionError::LengthMismatch(binned.n_rows, positive.len()));
    }
    check_binary(positive)?;
    let n = binned.n_rows;
    let mut weights = vec![1.0 / n as f64; n];
    let segmented = Segmented::new(binned, positive);
    let mut stumps = Vec::new();
    let mut scores: BTreeMap<usize, f64> = BTreeMap::new();

    for round in 0..config.estimators {
        let (tp, tn) = class_totals(positive, &weights);
        let root = weighted_gini(tp, tn);
        let choice = best_split(&segmented, positive, &weights);
        let stump = stump_from_choice(&choice, binned, view, tp, tn);
        let decrease = (root - choice.impurity).max(0.0);
        *scores.entry(stump.feature).or_insert(0.0) += decrease;

        let (h_left, h_right) = (stump.left.half_log_odds(), stump.right.half_log_odds());
        let codes = binned.column(choice.feature);
        let mut error = 0.0;
        let h: Vec<f64> = (0..n)
            .map(|i| {
                let left = choice.split.is_none_or(|k| codes[i] as usize <= k);
                let h = if left { h_left } else { h_right };
                if (h > 0.0) != positive[i] {
                    error += weights[i];
                }
                h
            })
            .collect();
        stumps.push(stump);
        if error < PERFECT_FIT_ERROR {
            break;
        }

        let mut sum = 0.0;
        for i in 0..n {
            let y = if positive[i] { 1.0 } else { -1.0 };
            weights[i] = (weights[i] * (-y * h[i]).exp()).max(f64::MIN_POSITIVE);
            sum += weights[i];
        }
        for w in &mut weights {
            *w = (*w / sum).max(f64::MIN_POSITIVE);
        }
        observe(round, &weights);
    }
    Ok(BoostedEnsemble { stumps, scores })
}

/// Two-class SAMME.R with stumps on a dense `samples x features` matrix.
pub fn boost_samme_r(
    x: ArrayView2<f64>,
    positive: &[bool],
    config: &SelectionConfig,
) -> Result<BoostedEnsemble, SelectionError> {
    if x.nrows() != positive.len() {
        return Err(SelectionError::LengthMismatch(x.nrows(), positive.len()));
    }
    config.validate()?;
    let view = FeatureView::from_matrix(x);
    let binned = BinnedColumns::build(&view, config.max_thresholds)?;
    boost_binned(&binned, &view, positive, config, |_, _| {})
}

/// Sorted, per-block feature indices chosen by boosting.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SelectedFeatures {
    /// Indices into the geometric block (IVA angles, or pairwise distances
    /// in the vector-length ablation).
    pub iva: Vec<usize>,
    /// Indices into the HOG block.
    pub hog: Vec<usize>,
    pub iva_dim: usize,
    pub hog_dim: usize,
}

impl SelectedFeatures {
    pub fn len(&self) -> usize {
        self.iva.len() + self.hog.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Global column indices in a view whose geometric block is `iva_dim` wide.
    pub fn global_columns(&self) -> Vec<usize> {
        self.iva
            .iter()
            .copied()
            .chain(self.hog.iter().map(|&h| h + self.iva_dim))
            .collect()
    }

    fn validate(&self) -> Result<(), SelectionError> {
        for (name, mask, dim) in [("iva", &self.iva, self.iva_dim), ("hog", &self.hog, self.hog_dim)] {
            if mask.windows(2).any(|w| w[0] >= w[1]) {
                return Err(SelectionError::DimensionMismatch(format!(
                    "{name} mask is not strictly increasing"
                )));
            }
            if let Some(&last) = mask.last() {
                if last >= dim {
                    return Err(SelectionError::DimensionMismatch(format!(
                        "{name} index {last} >= dimension {dim}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// JSON form of a selection mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskFile {
    pub iva: Vec<usize>,
    pub hog: Vec<usize>,
    pub config: SelectionConfig,
    pub seed: u64,
}

impl MaskFile {
    pub fn new(mask: &SelectedFeatures, config: &SelectionConfig) -> MaskFile {
        MaskFile {
            iva: mask.iva.clone(),
            hog: mask.hog.clone(),
            config: *config,
            seed: config.seed,
        }
    }
}

/// Boosts each class against the rest, keeps each run's top-k features and
/// returns the union split into geometric and appearance index spaces.
pub fn select_features_oaa(
    view: &FeatureView,
    labels: &[Expression],
    config: &SelectionConfig,
) -> Result<SelectedFeatures, SelectionError> {
    config.validate()?;
    if view.n_rows() != labels.len() {
        return Err(SelectionError::LengthMismatch(view.n_rows(), labels.len()));
    }
    for class in Expression::ALL {
        if !labels.contains(&class) {
            return Err(SelectionError::MissingClass(class));
        }
    }
    let binned = BinnedColumns::build(view, config.max_thresholds)?;
    let per_class: Vec<Result<Vec<usize>, SelectionError>> = Expression::ALL
        .par_iter()
        .map(|&class| {
            let positive: Vec<bool> = labels.iter().map(|&l| l == class).collect();
            let ensemble = boost_binned(&binned, view, &positive, config, |_, _| {})?;
            let mut ranked = ensemble.ranked_features();
            ranked.truncate(config.top_k);
            Ok(ranked)
        })
        .collect();
    let mut union = BTreeSet::new();
    for r in per_class {
        union.extend(r?);
    }
    let g = view.geometric_dim();
    let (iva, hog): (Vec<usize>, Vec<usize>) = union.into_iter().partition(|&f| f < g);
    Ok(SelectedFeatures {
        iva,
        hog: hog.into_iter().map(|f| f - g).collect(),
        iva_dim: g,
        hog_dim: view.appearance_dim(),
    })
}

/// Masked geometric entries followed by masked appearance entries.
pub fn apply_mask(geometric: &[f64], appearance: &[f64], mask: &SelectedFeatures) -> Result<Vec<f64>, SelectionError> {
    mask.validate()?;
    if geometric.len() != mask.iva_dim || appearance.len() != mask.hog_dim {
        return Err(SelectionError::DimensionMismatch(format!(
            "vector is {}+{}, mask expects {}+{}",
            geometric.len(),
            appearance.len(),
            mask.iva_dim,
            mask.hog_dim
        )));
    }
    Ok(mask
        .iva
        .iter()
        .map(|&i| geometric[i])
        .chain(mask.hog.iter().map(|&i| appearance[i]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(n: usize) -> Vec<f64> {
        vec![1.0 / n as f64; n]
    }

    #[test]
    fn stump_separable_1d() {
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let y = [false, false, true, true];
        let s = train_stump(x.view(), &y, &uniform(4)).unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 2.5);
        assert!(s.left.negative > 0.999 && s.right.positive > 0.999);
        assert!(s.impurity.abs() < 1e-15);
    }

    #[test]
    fn stump_prefers_informative_feature() {
        let x = array![[0.3, 0.0], [0.9, 0.0], [0.1, 1.0], [0.5, 1.0], [0.7, 0.0]];
        let y = [false, false, true, true, false];
        let s = train_stump(x.view(), &y, &uniform(5)).unwrap();
        assert_eq!(s.feature, 1);
        assert_eq!(s.threshold, 0.5);
    }

    /// Exhaustive search over every midpoint of every column.
    fn brute_force_impurity(x: &Array2<f64>, positive: &[bool], w: &[f64]) -> f64 {
        let impurity_at = |f: usize, t: f64| {
            let (mut lp, mut ln, mut rp, mut rn) = (0.0, 0.0, 0.0, 0.0);
            for i in 0..x.nrows() {
                match (x[[i, f]] <= t, positive[i]) {
                    (true, true) => lp += w[i],
                    (true, false) => ln += w[i],
                    (false, true) => rp += w[i],
                    (false, false) => rn += w[i],
                }
            }
            weighted_gini(lp, ln) + weighted_gini(rp, rn)
        };
        let mut best = f64::INFINITY;
        for f in 0..x.ncols() {
            let mut v: Vec<f64> = x.column(f).to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            for pair in v.windows(2) {
                best = best.min(impurity_at(f, 0.5 * (pair[0] + pair[1])));
            }
        }
        best
    }

    #[test]
    fn stump_search_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..300 {
            let n = rng.random_range(4..40);
            let d = rng.random_range(1..6);
            let coarse = trial % 2 == 0;
            let x = Array2::from_shape_fn((n, d), |_| {
                if coarse {
                    rng.random_range(0..4) as f64
                } else {
                    rng.random::<f64>()
                }
            });
            let mut positive: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
            positive[0] = true;
            positive[1] = false;
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|v| v / sum).collect();

            let stump = train_stump(x.view(), &positive, &w).unwrap();
            let expected = brute_force_impurity(&x, &positive, &w);
            if expected.is_finite() {
                assert!((stump.impurity - expected).abs() < 1e-12, "trial {trial}");
            }
        }
    }

    #[test]
    fn stump_ties_pick_lowest_feature() {
        let x = array![[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]];
        let y = [false, true, false, true];
        let s = train_stump(x.view(), &y, &uniform(4)).unwrap();
        assert_eq!(s.feature, 0);
    }

    #[test]
    fn stump_errors() {
        let x = array![[1.0], [2.0]];
        assert_eq!(
            train_stump(x.view(), &[true, true], &uniform(2)),
            Err(SelectionError::SingleClassInput)
        );
        assert_eq!(
            train_stump(x.view(), &[true, false], &[0.0, 1.0]),
            Err(SelectionError::InvalidWeights)
        );
    }

    #[test]
    fn constant_features_fall_back_to_single_leaf() {
        let x = array![[1.0], [1.0], [1.0]];
        let s = train_stump(x.view(), &[true, false, false], &uniform(3)).unwrap();
        assert_eq!(s.threshold, f64::INFINITY);
        assert!(s.goes_left(1e300));
    }

    #[test]
    fn candidate_threshold_cap() {
        let values: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let t = candidate_thresholds(&values, 256);
        assert_eq!(t.len(), 256);
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        let t = candidate_thresholds(&[3.0, 1.0, 3.0, 2.0], 256);
        assert_eq!(t, vec![1.5, 2.5]);
    }

    #[test]
    fn separable_data_stops_after_one_round() {
        let x = array![[1.0], [2.0], [3.0], [4.0], [5.0]];
        let y = [false, false, false, true, true];
        let e = boost_samme_r(x.view(), &y, &SelectionConfig::default()).unwrap();
        assert_eq!(e.stumps.len(), 1);
        for (row, &label) in x.rows().into_iter().zip(&y) {
            assert_eq!(e.predict(row.as_slice().unwrap()), label);
        }
    }

    #[test]
    fn single_round_matches_stump() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((40, 3), |_| rng.random::<f64>());
        let y: Vec<bool> = (0..40).map(|i| x[[i, 1]] + 0.3 * x[[i, 2]] > 0.6).collect();
        let cfg = SelectionConfig::with_estimators(1);
        let e = boost_samme_r(x.view(), &y, &cfg).unwrap();
        let s = train_stump(x.view(), &y, &uniform(40)).unwrap();
        assert_eq!(e.stumps, vec![s]);
        for row in x.rows() {
            let r = row.as_slice().unwrap();
            assert_eq!(e.predict(r), s.predict(r[s.feature]));
        }
    }

    #[test]
    fn weights_stay_normalised() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Array2::from_shape_fn((60, 5), |_| rng.random::<f64>());
        let y: Vec<bool> = (0..60).map(|_| rng.random::<bool>()).collect();
        let view = FeatureView::from_matrix(x.view());
        let binned = BinnedColumns::build(&view, 256).unwrap();
        let mut rounds = 0;
        boost_binned(&binned, &view, &y, &SelectionConfig::with_estimators(50), |_, w| {
            rounds += 1;
            assert!(w.iter().all(|&v| v > 0.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        })
        .unwrap();
        assert!(rounds > 1);
    }

    #[test]
    fn oaa_selects_indicator_columns() {
        // column 2c+1 indicates class c; even columns are noise
        let n_per = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut labels = Vec::new();
        let mut x = Array2::zeros((6 * n_per, 12));
        for c in 0..6 {
            for k in 0..n_per {
                let r = c * n_per + k;
                labels.push(Expression::from_index(c).unwrap());
                for j in 0..12 {
                    x[[r, j]] = if j % 2 == 1 {
                        if j / 2 == c { 1.0 } else { 0.0 }
                    } else {
                        rng.random::<f64>()
                    };
                }
            }
        }
        let g = x.slice(ndarray::s![.., ..7]);
        let a = x.slice(ndarray::s![.., 7..]);
        let view = FeatureView::new(g, a, (0..labels.len()).collect());
        let m = select_features_oaa(&view, &labels, &SelectionConfig::default()).unwrap();
        assert_eq!(m.global_columns(), vec![1, 3, 5, 7, 9, 11]);
        assert_eq!(m.iva, vec![1, 3, 5]);
        assert_eq!(m.hog, vec![0, 2, 4]);
        assert_eq!((m.iva_dim, m.hog_dim), (7, 5));
    }

    #[test]
    fn oaa_missing_class() {
        let x = Array2::<f64>::zeros((5, 2));
        let labels: Vec<Expression> = Expression::ALL[..5].to_vec();
        let view = FeatureView::from_matrix(x.view());
        assert_eq!(
            select_features_oaa(&view, &labels, &SelectionConfig::default()),
            Err(SelectionError::MissingClass(Expression::Surprise))
        );
    }

    #[test]
    fn non_finite_training_data_is_rejected() {
        let x = array![[1.0], [f64::NAN]];
        assert_eq!(
            boost_samme_r(x.view(), &[true, false], &SelectionConfig::default()),
            Err(SelectionError::NonFiniteFeature { row: 1, col: 0 })
        );
    }

    #[test]
    fn mask_application() {
        let m = SelectedFeatures {
            iva: vec![0, 2],
            hog: vec![],
            iva_dim: 3,
            hog_dim: 0,
        };
        assert_eq!(apply_mask(&[10.0, 20.0, 30.0], &[], &m).unwrap(), vec![10.0, 30.0]);
        let m2 = SelectedFeatures {
            hog: vec![1],
            hog_dim: 2,
            ..m.clone()
        };
        assert_eq!(apply_mask(&[10.0, 20.0, 30.0], &[7.0, 8.0], &m2).unwrap(), vec![10.0, 30.0, 8.0]);
        let bad = SelectedFeatures {
            iva: vec![0, 3],
            ..m.clone()
        };
        assert!(matches!(
            apply_mask(&[10.0, 20.0, 30.0], &[], &bad),
            Err(SelectionError::DimensionMismatch(_))
        ));
        assert!(matches!(
            apply_mask(&[10.0, 20.0], &[], &m),
            Err(SelectionError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn mask_json_shape() {
        let m = SelectedFeatures {
            iva: vec![4, 9],
            hog: vec![1],
            iva_dim: 10,
            hog_dim: 2,
        };
        let cfg = SelectionConfig {
            seed: 7,
            ..SelectionConfig::default()
        };
        let v: serde_json::Value = serde_json::to_value(MaskFile::new(&m, &cfg)).unwrap();
        assert_eq!(v["iva"], serde_json::json!([4, 9]));
        assert_eq!(v["hog"], serde_json::json!([1]));
        assert_eq!(v["seed"], 7);
        assert_eq!(v["config"]["estimators"], 100);
    }
}
