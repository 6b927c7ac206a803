//! Entropy, equal-frequency discretization and information-gain feature
//! weights for the clustering distance.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureKind, Value};
use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 10;

/// One information-gain weight per schema feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeights {
    pub weights: Vec<f64>,
    /// Bin count used to discretize continuous features.
    pub bins: usize,
}

impl FeatureWeights {
    pub fn uniform(m: usize) -> Self {
        FeatureWeights {
            weights: vec![1.0; m],
            bins: DEFAULT_BINS,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Shannon entropy (bits) of a frequency table.
pub fn entropy_of_counts<I: IntoIterator<Item = f64>>(counts: I) -> f64 {
    let counts: Vec<f64> = counts.into_iter().filter(|&c| c > 0.0).collect();
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let h = counts
        .iter()
        .map(|&c| {
            let p = c / total;
            -p * p.log2()
        })
        .sum::<f64>();
    h.max(0.0)
}

fn frequencies<T: Ord>(items: &[T]) -> BTreeMap<&T, usize> {
    let mut map = BTreeMap::new();
    for it in items {
        *map.entry(it).or_insert(0) += 1;
    }
    map
}

pub fn entropy<T: Ord>(labels: &[T]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::invalid("entropy of an empty multiset"));
    }
    Ok(entropy_of_counts(
        frequencies(labels).values().map(|&c| c as f64),
    ))
}

/// Equal-frequency binning. Cut points are the sorted values at positions
/// `floor(i * n / bins)` for `i = 1..bins`; a value's bin is the number of
/// cut points not exceeding it. Cut points equal to the column minimum are
/// dropped, so a constant column lands entirely in bin 0. Missing cells stay
/// `None`.
pub fn discretize(values: &[Option<f64>], bins: usize) -> Result<Vec<Option<u32>>> {
    if bins < 2 {
        return Err(Error::invalid(format!(
            "bin count must be at least 2, got {bins}"
        )));
    }
    let mut sorted: Vec<f64> = values.iter().flatten().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let cuts = cut_points(&sorted, bins);
    Ok(values
        .iter()
        .map(|v| v.map(|x| cuts.partition_point(|&c| c <= x) as u32))
        .collect())
}

fn cut_points(sorted: &[f64], bins: usize) -> Vec<f64> {
    let n = sorted.len();
    if n == 0 {
        return Vec::new();
    }
    let min = sorted[0];
    let mut cuts: Vec<f64> = (1..bins)
        .map(|i| sorted[(i * n / bins).min(n - 1)])
        .filter(|&c| c > min)
        .collect();
    cuts.dedup();
    cuts
}

/// `H(Y) - sum_v (n_v / n) H(Y | feature = v)`, where `v` ranges over the
/// distinct feature values (a missing marker counts as one value).
pub fn information_gain<F: Ord, L: Ord>(feature: &[F], labels: &[L]) -> Result<f64> {
    if feature.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: feature.len(),
            right: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::invalid("information gain over zero instances"));
    }
    let n = labels.len() as f64;
    let mut joint: BTreeMap<&F, BTreeMap<&L, usize>> = BTreeMap::new();
    for (f, l) in feature.iter().zip(labels) {
        *joint.entry(f).or_default().entry(l).or_insert(0) += 1;
    }
    let prior = entropy(labels)?;
    let conditional: f64 = joint
        .values()
        .map(|by_label| {
            let nv: usize = by_label.values().sum();
            (nv as f64 / n) * entropy_of_counts(by_label.values().map(|&c| c as f64))
        })
        .sum();
    Ok((prior - conditional).max(0.0))
}

/// Categorical view of every feature: continuous columns discretized with
/// `bins` equal-frequency bins, symbolic/ordinal columns by category index.
pub fn categorical_columns(d: &Dataset, bins: usize) -> Result<Vec<Vec<Option<u32>>>> {
    (0..d.m())
        .into_par_iter()
        .map(|q| categorical_column(d, q, bins))
        .collect()
}

pub fn categorical_column(d: &Dataset, q: usize, bins: usize) -> Result<Vec<Option<u32>>> {
    match d.schema.features[q].kind {
        FeatureKind::Continuous => {
            let col: Vec<Option<f64>> = d
                .rows
                .iter()
                .map(|r| match r[q] {
                    Value::Num(v) => Some(v),
                    _ => None,
                })
                .collect();
            discretize(&col, bins)
        }
        FeatureKind::Symbolic | FeatureKind::Ordinal => {
            Ok(d.rows.iter().map(|r| r[q].as_cat()).collect())
        }
    }
}

pub fn compute_feature_weights(d: &Dataset, bins: usize) -> Result<FeatureWeights> {
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let columns = categorical_columns(d, bins)?;
    let weights = columns
        .par_iter()
        .map(|col| information_gain(col, &d.labels))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureWeights { weights, bins })
}
