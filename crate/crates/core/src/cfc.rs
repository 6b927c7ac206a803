//! Training over candidate cluster counts, the operation-phase predictor,
//! and model persistence.
//!
//! Training normalizes the data, weighs features by information gain, and
//! then for every candidate `k` clusters the normalized set, appends the
//! cluster features to the *original* values, induces a classifier and
//! scores it by stratified cross-validation. The candidate with the best
//! mean accuracy wins; ties go to the smaller `k`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{
    build_cluster_features, full_row, full_schema, layout_indices, manipulate, project_schema,
    ClusterFeatures, ManipulationMode,
};
use crate::dataset::{
    apply_normalization, fit_normalization, Dataset, FeatureSchema, NormalizationParams, Value,
};
use crate::error::{Error, Result};
use crate::fcm::{self, CentroidSet, FcmConfig, FcmFit};
use crate::inducer::{
    classify, cross_validate, evaluate, induce, stratified_folds, Classifier, EvaluationReport,
    InducerSpec,
};
use crate::infogain::{compute_feature_weights, FeatureWeights, DEFAULT_BINS};
use crate::select::{select_features, FeatureSubset, GeneticSearchConfig, SearchStrategy};
use crate::util::mix_seed;

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "CFC-MODEL";

/// Where clustering happens relative to cross-validation folds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvScope {
    /// Cluster the whole training set once, then cross-validate the
    /// augmented set. Cluster features of test folds have seen those folds.
    Global,
    /// Refit normalization, weights, clustering and selection on every
    /// training fold; test folds get cluster features from the fold's
    /// centroids.
    PerFold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfcConfig {
    pub k_values: Vec<usize>,
    pub mode: ManipulationMode,
    pub folds: usize,
    pub inducer: InducerSpec,
    /// Template for clustering; `k` and `seed` are set per candidate.
    pub fcm: FcmConfig,
    pub search: SearchStrategy,
    pub ga: GeneticSearchConfig,
    pub bins: usize,
    pub seed: u64,
    pub cv_scope: CvScope,
    /// Stratify folds by group tags when the dataset has them.
    pub stratify_by_group: bool,
}

impl Default for CfcConfig {
    fn default() -> Self {
        CfcConfig {
            k_values: (2..=50).collect(),
            mode: ManipulationMode::T1,
            folds: 10,
            inducer: InducerSpec::default(),
            fcm: FcmConfig::new(2),
            search: SearchStrategy::Genetic,
            ga: GeneticSearchConfig::default(),
            bins: DEFAULT_BINS,
            seed: 1,
            cv_scope: CvScope::Global,
            stratify_by_group: true,
        }
    }
}

impl CfcConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k_values.is_empty() {
            return Err(Error::invalid("candidate cluster set is empty"));
        }
        if let Some(&k) = self.k_values.iter().find(|&&k| k < 2) {
            return Err(Error::invalid(format!(
                "cluster counts must be at least 2, got {k}"
            )));
        }
        if let Some(&k) = self.k_values.iter().find(|&&k| k > n) {
            return Err(Error::invalid(format!(
                "cluster count {k} exceeds the {n} training instances"
            )));
        }
        if self.folds < 2 {
            return Err(Error::invalid("cross-validation needs at least 2 folds"));
        }
        if self.folds > n {
            return Err(Error::invalid(format!(
                "{} folds requested for {n} instances",
                self.folds
            )));
        }
        if self.bins < 2 {
            return Err(Error::invalid("bin count must be at least 2"));
        }
        FcmConfig {
            k: 2,
            ..self.fcm.clone()
        }
        .validate()?;
        self.inducer.validate()?;
        if self.mode == ManipulationMode::T3 && self.search == SearchStrategy::Genetic {
            self.ga.validate()?;
        }
        Ok(())
    }

    fn fcm_for(&self, k: usize) -> FcmConfig {
        FcmConfig {
            k,
            seed: mix_seed(self.seed, k as u64),
            ..self.fcm.clone()
        }
    }

    fn ga_for(&self, k: usize) -> GeneticSearchConfig {
        GeneticSearchConfig {
            seed: mix_seed(self.ga.seed ^ self.seed, 0x5e1ec7 + k as u64),
            ..self.ga.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateResult {
    pub k: usize,
    pub cv_accuracy: f64,
    pub fold_reports: Vec<EvaluationReport>,
    /// Columns the classifier sees.
    pub feature_count: usize,
    pub classifier: Classifier,
    pub centroids: CentroidSet,
    pub subset: Option<FeatureSubset>,
    pub fcm_iterations: usize,
    pub fcm_converged: bool,
}

/// Everything the operation phase needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfcModel {
    pub format_version: u32,
    pub k: usize,
    pub mode: ManipulationMode,
    /// Original feature schema, with the symbolic categories seen in
    /// training.
    pub schema: FeatureSchema,
    pub normalization: NormalizationParams,
    pub weights: FeatureWeights,
    pub fcm: FcmConfig,
    pub centroids: CentroidSet,
    pub subset: Option<FeatureSubset>,
    pub classes: Vec<String>,
    pub classifier: Classifier,
}

/// Operation-phase output for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct CfcPrediction {
    pub class: u32,
    pub probabilities: Vec<f64>,
    pub cluster: ClusterFeatures,
}

impl CfcModel {
    pub fn class_name(&self, class: u32) -> &str {
        &self.classes[class as usize]
    }

    /// Columns of the full cluster-feature layout the classifier reads.
    pub fn layout(&self) -> Result<Vec<usize>> {
        layout_indices(&self.schema, self.k, self.mode, self.subset.as_ref())
    }

    pub fn classifier_schema(&self) -> Result<FeatureSchema> {
        Ok(project_schema(
            &full_schema(&self.schema, self.k),
            &self.layout()?,
        ))
    }

    fn check(&self) -> Result<()> {
        if self.centroids.k() != self.k {
            return Err(Error::Corrupted(format!(
                "{} centroids stored for k = {}",
                self.centroids.k(),
                self.k
            )));
        }
        if self.weights.len() != self.schema.len() {
            return Err(Error::Corrupted(
                "feature weights do not match the schema".into(),
            ));
        }
        let expected = self.classifier_schema()?.fingerprint();
        if expected != self.classifier.fingerprint() {
            return Err(Error::Corrupted(format!(
                "classifier schema {} does not follow from the stored schema and mode ({expected})",
                self.classifier.fingerprint()
            )));
        }
        Ok(())
    }

    fn cluster_features(&self, x: &[Value]) -> ClusterFeatures {
        let xn = self.normalization.normalize_row(x);
        ClusterFeatures::from_memberships(fcm::memberships_for(
            &xn,
            &self.centroids,
            self.fcm.alpha,
            &self.weights,
        ))
    }

    fn predict_with(&self, x: &[Value], layout: &[usize]) -> Result<CfcPrediction> {
        if x.len() != self.schema.len() {
            return Err(Error::SchemaMismatch {
                expected: format!(
                    "{} features ({})",
                    self.schema.len(),
                    self.schema.fingerprint()
                ),
                found: format!("{} features", x.len()),
            });
        }
        let cluster = self.cluster_features(x);
        let full = full_row(x, &cluster);
        let input: Vec<Value> = layout.iter().map(|&c| full[c]).collect();
        let p = classify(&self.classifier, &input)?;
        Ok(CfcPrediction {
            class: p.class,
            probabilities: p.probabilities,
            cluster,
        })
    }
}

pub fn predict(model: &CfcModel, x: &[Value]) -> Result<CfcPrediction> {
    model.predict_with(x, &model.layout()?)
}

pub fn predict_batch(model: &CfcModel, rows: &[Vec<Value>]) -> Result<Vec<CfcPrediction>> {
    let layout = model.layout()?;
    rows.par_iter()
        .map(|x| model.predict_with(x, &layout))
        .collect()
}

struct Fitted {
    model: CfcModel,
    fit: FcmFit,
    manipulated: Dataset,
}

/// Clusters, augments, selects (T3) and induces for one cluster count.
fn fit_for_k(
    d: &Dataset,
    normalization: &NormalizationParams,
    normalized: &Dataset,
    weights: &FeatureWeights,
    k: usize,
    cfg: &CfcConfig,
) -> Result<Fitted> {
    let fcm_cfg = cfg.fcm_for(k);
    let fit = fcm::fit(&normalized.rows, &normalized.schema, &fcm_cfg, weights)?;
    let block = build_cluster_features(&fit.memberships);
    let subset = match cfg.mode {
        ManipulationMode::T3 => {
            let full = manipulate(d, &block, ManipulationMode::T2, None)?;
            Some(select_features(
                &full,
                cfg.bins,
                cfg.search,
                &cfg.ga_for(k),
            )?)
        }
        _ => None,
    };
    let manipulated = manipulate(d, &block, cfg.mode, subset.as_ref())?;
    let classifier = induce(&manipulated, &cfg.inducer)?;
    let model = CfcModel {
        format_version: MODEL_FORMAT_VERSION,
        k,
        mode: cfg.mode,
        schema: d.schema.clone(),
        normalization: normalization.clone(),
        weights: weights.clone(),
        fcm: fcm_cfg,
        centroids: fit.centroids.clone(),
        subset,
        classes: d.classes.clone(),
        classifier,
    };
    Ok(Fitted {
        model,
        fit,
        manipulated,
    })
}

fn prepare(d: &Dataset, bins: usize) -> Result<(NormalizationParams, Dataset, FeatureWeights)> {
    let normalization = fit_normalization(d)?;
    let normalized = apply_normalization(d, &normalization)?;
    let weights = compute_feature_weights(&normalized, bins)?;
    Ok((normalization, normalized, weights))
}

fn per_fold_cv(
    d: &Dataset,
    k: usize,
    cfg: &CfcConfig,
    strata: &[u32],
) -> Result<(f64, Vec<EvaluationReport>)> {
    let folds = stratified_folds(strata, cfg.folds, cfg.seed)?;
    let reports = folds
        .par_iter()
        .map(|fold| {
            let train = d.subset(&fold.train);
            let (norm, normalized, weights) = prepare(&train, cfg.bins)?;
            let fitted = fit_for_k(&train, &norm, &normalized, &weights, k, cfg)?;
            let rows: Vec<Vec<Value>> = fold.test.iter().map(|&i| d.rows[i].clone()).collect();
            let predicted: Vec<u32> = predict_batch(&fitted.model, &rows)?
                .into_iter()
                .map(|p| p.class)
                .collect();
            let truth: Vec<u32> = fold.test.iter().map(|&i| d.labels[i]).collect();
            evaluate(&predicted, &truth, &d.classes)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = reports.iter().map(|r| r.accuracy).sum::<f64>() / reports.len() as f64;
    Ok((mean, reports))
}

/// Runs the candidate loop and returns the winning model with every
/// candidate's result, in ascending `k`.
pub fn train(d: &Dataset, cfg: &CfcConfig) -> Result<(CfcModel, Vec<CandidateResult>)> {
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    cfg.validate(d.n())?;
    d.schema.check_reserved()?;
    let mut ks = cfg.k_values.clone();
    ks.sort_unstable();
    ks.dedup();

    let (normalization, normalized, weights) = prepare(d, cfg.bins)?;
    let strata = if cfg.stratify_by_group {
        d.strata()
    } else {
        d.labels.clone()
    };

    let results = ks
        .par_iter()
        .map(|&k| {
            let fitted = fit_for_k(d, &normalization, &normalized, &weights, k, cfg)?;
            let (cv_accuracy, fold_reports) = match cfg.cv_scope {
                CvScope::Global => {
                    let cv = cross_validate(
                        &fitted.manipulated,
                        &cfg.inducer,
                        cfg.folds,
                        &strata,
                        cfg.seed,
                    )?;
                    (cv.mean_accuracy, cv.folds)
                }
                CvScope::PerFold => per_fold_cv(d, k, cfg, &strata)?,
            };
            Ok((fitted, cv_accuracy, fold_reports))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        if r.1 > results[best].1 {
            best = i;
        }
    }
    let model = results[best].0.model.clone();
    let candidates = results
        .into_iter()
        .map(|(f, cv_accuracy, fold_reports)| CandidateResult {
            k: f.model.k,
            cv_accuracy,
            fold_reports,
            feature_count: f.manipulated.m(),
            classifier: f.model.classifier,
            centroids: f.model.centroids,
            subset: f.model.subset,
            fcm_iterations: f.fit.iterations,
            fcm_converged: f.fit.converged,
        })
        .collect();
    Ok((model, candidates))
}

// ---------------------------------------------------------------------------
// Persistence
//
// File layout:
//
//   CFC-MODEL <version>
//   sha256 <hex digest of the body>
//   <JSON body>

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn model_to_string(model: &CfcModel) -> Result<String> {
    let body = serde_json::to_string_pretty(model).map_err(|e| Error::Serde(e.to_string()))?;
    let digest = hex(&Sha256::digest(body.as_bytes()));
    Ok(format!(
        "{MAGIC} {}\nsha256 {digest}\n{body}\n",
        model.format_version
    ))
}

pub fn model_from_str(text: &str) -> Result<CfcModel> {
    let (first, rest) = text
        .split_once('\n')
        .ok_or_else(|| Error::Corrupted("missing header".into()))?;
    let version = first
        .strip_prefix(MAGIC)
        .map(str::trim)
        .ok_or_else(|| Error::Corrupted("not a model file".into()))?;
    if version != MODEL_FORMAT_VERSION.to_string() {
        return Err(Error::Version {
            found: version.to_string(),
            supported: MODEL_FORMAT_VERSION.to_string(),
        });
    }
    let (second, body) = rest
        .split_once('\n')
        .ok_or_else(|| Error::Corrupted("missing checksum line".into()))?;
    let expected = second
        .strip_prefix("sha256 ")
        .ok_or_else(|| Error::Corrupted("missing checksum line".into()))?;
    let body = body.strip_suffix('\n').unwrap_or(body);
    if hex(&Sha256::digest(body.as_bytes())) != expected {
        return Err(Error::Corrupted("checksum mismatch".into()));
    }
    let model: CfcModel =
        serde_json::from_str(body).map_err(|e| Error::Corrupted(e.to_string()))?;
    model.check()?;
    Ok(model)
}

pub fn save_model(model: &CfcModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = model_to_string(model)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<CfcModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Corrupted("not UTF-8".into()))?;
    model_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Feature, FeatureSchema};

    fn blobs() -> Dataset {
        let schema = FeatureSchema::new(vec![
            Feature::continuous("x"),
            Feature::symbolic("s", ["u", "v"]),
        ])
        .unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let hi = i >= 20;
            let x = if hi {
                10.0 + (i % 7) as f64
            } else {
                (i % 5) as f64
            };
            rows.push(vec![Value::Num(x), Value::Cat(u32::from(i % 3 == 0))]);
            labels.push(if hi { "b" } else { "a" });
        }
        Dataset::new(schema, rows, &labels).unwrap()
    }

    fn small_cfg(ks: Vec<usize>) -> CfcConfig {
        CfcConfig {
            k_values: ks,
            folds: 4,
            ..CfcConfig::default()
        }
    }

    #[test]
    fn singleton_candidate_set() {
        let (model, cands) = train(&blobs(), &small_cfg(vec![5])).unwrap();
        assert_eq!(model.k, 5);
        assert_eq!(cands.len(), 1);
        assert_eq!(model.centroids.k(), 5);
    }

    #[test]
    fn ties_prefer_smaller_k() {
        // perfectly separable: every candidate scores 1.0
        let (model, cands) = train(&blobs(), &small_cfg(vec![4, 2, 3])).unwrap();
        assert!(cands.iter().all(|c| c.cv_accuracy == 1.0));
        assert_eq!(cands.iter().map(|c| c.k).collect::<Vec<_>>(), vec![2, 3, 4]);
        assert_eq!(model.k, 2);
    }

    #[test]
    fn config_validation() {
        let d = blobs();
        assert!(train(&d, &small_cfg(vec![])).is_err());
        assert!(train(&d, &small_cfg(vec![1])).is_err());
        assert!(train(&d, &small_cfg(vec![41])).is_err());
        let cfg = CfcConfig {
            folds: 1,
            ..small_cfg(vec![2])
        };
        assert!(train(&d, &cfg).is_err());
    }

    #[test]
    fn feature_vector_sizes_per_mode() {
        let d = blobs();
        for (mode, expect) in [(ManipulationMode::T1, 4), (ManipulationMode::T2, 7)] {
            let cfg = CfcConfig {
                mode,
                ..small_cfg(vec![3])
            };
            let (model, _) = train(&d, &cfg).unwrap();
            assert_eq!(model.layout().unwrap().len(), expect);
        }
        let cfg = CfcConfig {
            mode: ManipulationMode::T3,
            ..small_cfg(vec![3])
        };
        let (model, _) = train(&d, &cfg).unwrap();
        assert_eq!(
            model.layout().unwrap().len(),
            model.subset.as_ref().unwrap().len()
        );
    }

    #[test]
    fn persistence_round_trip_and_rejections() {
        let (model, _) = train(&blobs(), &small_cfg(vec![3])).unwrap();
        let text = model_to_string(&model).unwrap();
        let back = model_from_str(&text).unwrap();
        assert_eq!(back, model);
        assert_eq!(model_to_string(&back).unwrap(), text);

        let truncated = &text[..text.len() / 2];
        assert!(matches!(
            model_from_str(truncated),
            Err(Error::Corrupted(_))
        ));
        let tampered = text.replacen("\"k\": 3", "\"k\": 4", 1);
        assert!(matches!(
            model_from_str(&tampered),
            Err(Error::Corrupted(_))
        ));
        let future = text.replacen("CFC-MODEL 1", "CFC-MODEL 9", 1);
        match model_from_str(&future) {
            Err(Error::Version { found, supported }) => {
                assert_eq!(found, "9");
                assert_eq!(supported, "1");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn prediction_memberships_are_stochastic() {
        let (model, _) = train(&blobs(), &small_cfg(vec![3])).unwrap();
        let p = predict(&model, &[Value::Num(3.3), Value::Missing]).unwrap();
        let s: f64 = p.cluster.w.iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
        assert_eq!(p.cluster.b, p.cluster.w.iter().copied().fold(0.0, f64::max));
        assert!(predict(&model, &[Value::Num(1.0)]).is_err());
    }
}
