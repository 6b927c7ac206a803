//! Classifier induction, stratified cross-validation and evaluation.
//!
//! [`InducerSpec`] and [`Classifier`] are closed enums with one variant per
//! learning algorithm; a new inducer adds a variant to both.

mod cv;
mod eval;
pub mod tree;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Value};
use crate::error::{Error, Result};

pub use cv::{cross_validate, stratified_folds, CvOutcome, Fold};
pub use eval::{evaluate, evaluate_labels, EvaluationReport};
pub use tree::{DecisionTree, TreeParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InducerSpec {
    DecisionTree(TreeParams),
}

impl Default for InducerSpec {
    fn default() -> Self {
        InducerSpec::DecisionTree(TreeParams::default())
    }
}

impl InducerSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            InducerSpec::DecisionTree(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classifier {
    DecisionTree(DecisionTree),
}

/// Predicted class index with the class-probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: u32,
    pub probabilities: Vec<f64>,
}

impl Classifier {
    pub fn classes(&self) -> &[String] {
        match self {
            Classifier::DecisionTree(t) => &t.classes,
        }
    }

    pub fn fingerprint(&self) -> &str {
        match self {
            Classifier::DecisionTree(t) => &t.fingerprint,
        }
    }

    pub fn input_len(&self) -> usize {
        match self {
            Classifier::DecisionTree(t) => t.schema.len(),
        }
    }
}

pub fn induce(d: &Dataset, spec: &InducerSpec) -> Result<Classifier> {
    spec.validate()?;
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    match spec {
        InducerSpec::DecisionTree(p) => Ok(Classifier::DecisionTree(tree::grow(d, p)?)),
    }
}

pub fn classify(c: &Classifier, x: &[Value]) -> Result<Prediction> {
    if x.len() != c.input_len() {
        return Err(Error::SchemaMismatch {
            expected: format!("{} features ({})", c.input_len(), c.fingerprint()),
            found: format!("{} features", x.len()),
        });
    }
    match c {
        Classifier::DecisionTree(t) => Ok(t.predict(x)),
    }
}
