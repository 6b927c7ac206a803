//! Cluster-feature columns and the augmented ("manipulated") training set.
//!
//! For a membership row `w` the basic cluster features are `_Z`, the 1-based
//! index of the strongest cluster (a symbolic column), and `_B`, its
//! membership. The extended features `_P1.._Pk` are the membership columns
//! themselves.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Feature, FeatureSchema, Value};
use crate::error::{Error, Result};
use crate::fcm::MembershipMatrix;
use crate::select::FeatureSubset;
use crate::util::argmax;

pub const Z_COLUMN: &str = "_Z";
pub const B_COLUMN: &str = "_B";

pub fn p_column(j: usize) -> String {
    format!("_P{j}")
}

/// How cluster features join the original ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ManipulationMode {
    /// original + `_Z`, `_B`
    T1,
    /// original + `_Z`, `_B`, `_P1.._Pk`
    T2,
    /// a selected subset of the T2 layout
    T3,
}

impl FromStr for ManipulationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().trim_start_matches(['T', 't']) {
            "1" => Ok(ManipulationMode::T1),
            "2" => Ok(ManipulationMode::T2),
            "3" => Ok(ManipulationMode::T3),
            _ => Err(Error::invalid(format!("mode must be 1, 2 or 3, got {s:?}"))),
        }
    }
}

impl fmt::Display for ManipulationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = match self {
            ManipulationMode::T1 => 1,
            ManipulationMode::T2 => 2,
            ManipulationMode::T3 => 3,
        };
        write!(f, "T{n}")
    }
}

/// Cluster features of a single instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFeatures {
    /// 1-based strongest cluster; ties go to the smaller index.
    pub z: usize,
    pub b: f64,
    pub w: Vec<f64>,
}

impl ClusterFeatures {
    pub fn from_memberships(w: Vec<f64>) -> Self {
        let j = argmax(&w);
        ClusterFeatures {
            z: j + 1,
            b: w[j],
            w,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterFeatureBlock {
    pub z: Vec<usize>,
    pub b: Vec<f64>,
    pub p: Vec<Vec<f64>>,
    pub k: usize,
}

impl ClusterFeatureBlock {
    pub fn n(&self) -> usize {
        self.z.len()
    }
}

pub fn build_cluster_features(w: &MembershipMatrix) -> ClusterFeatureBlock {
    let k = w.k();
    let mut z = Vec::with_capacity(w.n());
    let mut b = Vec::with_capacity(w.n());
    for row in &w.rows {
        let cf = ClusterFeatures::from_memberships(row.clone());
        z.push(cf.z);
        b.push(cf.b);
    }
    ClusterFeatureBlock {
        z,
        b,
        p: w.rows.clone(),
        k,
    }
}

/// Schema of the T2 layout: original features, `_Z`, `_B`, `_P1.._Pk`.
pub fn full_schema(original: &FeatureSchema, k: usize) -> FeatureSchema {
    let mut features = original.features.clone();
    features.push(Feature::symbolic(Z_COLUMN, (1..=k).map(|j| j.to_string())));
    features.push(Feature::continuous(B_COLUMN));
    features.extend((1..=k).map(|j| Feature::continuous(p_column(j))));
    FeatureSchema {
        features,
        missing: original.missing.clone(),
    }
}

/// Column indices of the T2 layout that a mode keeps, ascending.
pub fn layout_indices(
    original: &FeatureSchema,
    k: usize,
    mode: ManipulationMode,
    selected: Option<&FeatureSubset>,
) -> Result<Vec<usize>> {
    let m = original.len();
    match mode {
        ManipulationMode::T1 => Ok((0..m + 2).collect()),
        ManipulationMode::T2 => Ok((0..m + 2 + k).collect()),
        ManipulationMode::T3 => {
            let subset = selected
                .ok_or_else(|| Error::invalid("mode T3 needs a selected feature subset"))?;
            let full = full_schema(original, k);
            let mut idx = subset
                .names
                .iter()
                .map(|name| {
                    full.index_of(name).ok_or_else(|| {
                        Error::invalid(format!("selected feature {name:?} is not in the layout"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            idx.sort_unstable();
            idx.dedup();
            if idx.is_empty() {
                return Err(Error::invalid("selected feature subset is empty"));
            }
            Ok(idx)
        }
    }
}

pub fn project_schema(full: &FeatureSchema, idx: &[usize]) -> FeatureSchema {
    FeatureSchema {
        features: idx.iter().map(|&i| full.features[i].clone()).collect(),
        missing: full.missing.clone(),
    }
}

/// One instance in the T2 layout.
pub fn full_row(row: &[Value], cf: &ClusterFeatures) -> Vec<Value> {
    let mut out = Vec::with_capacity(row.len() + 2 + cf.w.len());
    out.extend_from_slice(row);
    out.push(Value::Cat((cf.z - 1) as u32));
    out.push(Value::Num(cf.b));
    out.extend(cf.w.iter().map(|&p| Value::Num(p)));
    out
}

/// Horizontal concatenation of `d` with its cluster features per `mode`.
/// `d` should hold the original (unnormalized) values.
pub fn manipulate(
    d: &Dataset,
    cf: &ClusterFeatureBlock,
    mode: ManipulationMode,
    selected: Option<&FeatureSubset>,
) -> Result<Dataset> {
    if cf.n() != d.n() {
        return Err(Error::LengthMismatch {
            left: cf.n(),
            right: d.n(),
        });
    }
    let idx = layout_indices(&d.schema, cf.k, mode, selected)?;
    let schema = project_schema(&full_schema(&d.schema, cf.k), &idx);
    let rows = d
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let feats = ClusterFeatures {
                z: cf.z[i],
                b: cf.b[i],
                w: cf.p[i].clone(),
            };
            let full = full_row(row, &feats);
            idx.iter().map(|&c| full[c]).collect()
        })
        .collect();
    Ok(Dataset {
        schema,
        rows,
        labels: d.labels.clone(),
        classes: d.classes.clone(),
        groups: d.groups.clone(),
    })
}
