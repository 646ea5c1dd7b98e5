//! Feature standardisation, binary SVMs and the one-against-one ensemble.

mod oao;
mod standardize;
mod svm;

use thiserror::Error;

use crate::data::Expression;

pub use oao::{class_pairs, majority_vote, train_oao, OaoEnsemble, PairMachine, Prediction};
pub use standardize::{Standardizer, STD_FLOOR};
pub use svm::{kkt_max_violation, train_binary_svm, BinarySvm, Kernel, SvmParams};

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("training data has only one class")]
    SingleClassInput,
    #[error("labels must be -1 or +1")]
    InvalidLabels,
    #[error("class {0} has no training samples")]
    MissingClass(Expression),
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("{0} rows but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid SVM parameters: {0}")]
    InvalidParams(String),
}
