//! Facial-expression recognition from 68-point landmarks and face crops.
//!
//! The pipeline turns each face into inter-vector angles over all landmark
//! triples plus a HOG descriptor of the eye-aligned crop, selects a compact
//! subset of columns with boosted decision stumps, and classifies the six
//! basic expressions with one-against-one SVMs.

pub mod alignment;
pub mod classifier;
pub mod data;
pub mod evaluation;
pub mod features;
pub mod geometry;
pub mod hog;
pub mod model;
pub mod records;
pub mod selection;
pub mod synthetic;

use thiserror::Error;

pub use data::{Expression, GrayImage, LandmarkSet, Point};
pub use features::{ExtractionConfig, FeatureMode};
pub use model::{load_model, save_model, OaoModel, PipelineConfig};

/// Any failure the pipeline can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error(transparent)]
    Geometry(#[from] geometry::GeometryError),
    #[error(transparent)]
    Align(#[from] alignment::AlignError),
    #[error(transparent)]
    Hog(#[from] hog::HogError),
    #[error(transparent)]
    Selection(#[from] selection::SelectionError),
    #[error(transparent)]
    Classifier(#[from] classifier::ClassifierError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Eval(#[from] evaluation::EvalError),
}
