//! Supervised models written from scratch: CART trees, bagged forests and
//! Gaussian naive Bayes, plus accuracy and R² scoring.

mod bayes;
mod forest;
mod metrics;
mod tree;

use thiserror::Error;

pub use bayes::GaussianNB;
pub use forest::{ForestParams, RandomForest};
pub use metrics::{accuracy, r2, ScoreKind};
pub use tree::{DecisionTree, Leaf, Node, TreeParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MlError {
    #[error("no training data")]
    Empty,
    #[error("length mismatch: {0} samples vs {1} targets")]
    LengthMismatch(usize, usize),
    #[error("feature arity mismatch: expected {expected}, found {found}")]
    Arity { expected: usize, found: usize },
    #[error("non-finite feature value at row {0}")]
    NonFinite(usize),
    #[error("class label {label} out of range for {n_classes} classes")]
    Label { label: usize, n_classes: usize },
    #[error("R² is undefined: {0}")]
    UndefinedScore(&'static str),
    #[error("cannot read model: {0}")]
    Format(String),
}

/// Training targets: class indices or real values.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Classes { labels: &'a [usize], n_classes: usize },
    Values(&'a [f64]),
}

impl Targets<'_> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes { labels, .. } => labels.len(),
            Targets::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub trait Classifier: Send + Sync {
    fn predict_one(&self, x: &[f64]) -> usize;

    fn predict(&self, xs: &[Vec<f64>]) -> Vec<usize> {
        xs.iter().map(|x| self.predict_one(x)).collect()
    }
}

pub trait Regressor: Send + Sync {
    fn predict_value(&self, x: &[f64]) -> f64;

    fn predict_values(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        xs.iter().map(|x| self.predict_value(x)).collect()
    }
}

pub(crate) fn validate(x: &[Vec<f64>], targets: &Targets<'_>) -> Result<usize, MlError> {
    if x.is_empty() {
        return Err(MlError::Empty);
    }
    if x.len() != targets.len() {
        return Err(MlError::LengthMismatch(x.len(), targets.len()));
    }
    let d = x[0].len();
    for (i, row) in x.iter().enumerate() {
        if row.len() != d {
            return Err(MlError::Arity { expected: d, found: row.len() });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(MlError::NonFinite(i));
        }
    }
    if let Targets::Classes { labels, n_classes } = targets {
        if let Some(&label) = labels.iter().find(|&&l| l >= *n_classes) {
            return Err(MlError::Label { label, n_classes: *n_classes });
        }
    }
    Ok(d)
}

/// Index of the largest count; ties go to the lowest index.
pub(crate) fn argmax_counts(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}
