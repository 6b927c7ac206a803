//! Fuzzy cluster-feature classification.
//!
//! A labeled training set is clustered with fuzzy c-means over a
//! gain-weighted mixed-type distance. The resulting membership information
//! (the argmax cluster `_Z`, the maximum membership `_B` and the membership
//! columns `_P1.._Pk`) is appended to the original features, a decision tree
//! is induced on the augmented set, and the cluster count is chosen by
//! stratified cross-validation over a candidate set. New instances get their
//! cluster features from the stored centroids before classification.

pub mod augment;
pub mod cfc;
pub mod dataset;
pub mod error;
pub mod fcm;
pub mod inducer;
pub mod infogain;
pub mod select;
pub(crate) mod util;

pub use augment::{build_cluster_features, manipulate, ClusterFeatureBlock, ManipulationMode};
pub use cfc::{load_model, predict, save_model, train, CandidateResult, CfcConfig, CfcModel};
pub use dataset::{
    apply_normalization, fit_normalization, load_dataset, load_dataset_with, sample_by_group,
    Dataset, Feature, FeatureKind, FeatureSchema, GroupTags, NormalizationParams, Value,
};
pub use error::{Error, Result};
pub use fcm::{CentroidSet, FcmConfig, MembershipMatrix};
pub use inducer::{Classifier, EvaluationReport, InducerSpec};
pub use infogain::{compute_feature_weights, FeatureWeights};
pub use select::{FeatureSubset, GeneticSearchConfig};
