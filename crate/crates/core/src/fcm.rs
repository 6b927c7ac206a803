//! Fuzzy c-means over mixed-type instances.
//!
//! The squared distance between an instance and a centroid is the
//! gain-weighted sum of per-feature squared distances:
//!
//! * continuous: `|x - v|`
//! * ordinal: `|rank(x) - v| / (t - 1)` with `t` ordered levels
//! * symbolic: 0 when `x` equals the centroid's representative category,
//!   1 otherwise
//! * a missing cell is at distance 1 from anything
//!
//! Memberships follow `w_ij ∝ (1 / d_ij²)^(1/(α-1))`, centroids are the
//! `w^α`-weighted means. Symbolic centroid components keep the `w^α`-weighted
//! category distribution; its argmax is the representative category.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureKind, FeatureSchema, Value};
use crate::error::{Error, Result};
use crate::infogain::FeatureWeights;
use crate::util::argmax;

pub const DEFAULT_ALPHA: f64 = 3.0;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceCriterion {
    /// Stop when the largest absolute membership change falls below the
    /// tolerance.
    MembershipDelta,
    /// Stop when the objective's relative decrease falls below the tolerance.
    ObjectiveDelta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcmConfig {
    pub k: usize,
    pub alpha: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
    pub criterion: ConvergenceCriterion,
}

impl FcmConfig {
    pub fn new(k: usize) -> Self {
        FcmConfig {
            k,
            alpha: DEFAULT_ALPHA,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            seed: 0,
            criterion: ConvergenceCriterion::MembershipDelta,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("cluster count must be positive"));
        }
        if self.alpha.is_nan() || self.alpha <= 1.0 || !self.alpha.is_finite() {
            return Err(Error::invalid(format!(
                "fuzzy degree must exceed 1, got {}",
                self.alpha
            )));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::invalid(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentroidComponent {
    Continuous(f64),
    Ordinal {
        rank: f64,
        levels: usize,
    },
    Symbolic {
        weights: Vec<f64>,
        representative: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidSet {
    pub centroids: Vec<Vec<CentroidComponent>>,
}

impl CentroidSet {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }
}

/// Row-stochastic n×k membership matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMatrix {
    pub rows: Vec<Vec<f64>>,
}

impl MembershipMatrix {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn k(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    fn max_abs_diff(&self, other: &MembershipMatrix) -> f64 {
        self.rows
            .iter()
            .zip(&other.rows)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

pub fn feature_distance(x: &Value, v: &CentroidComponent) -> f64 {
    match (x, v) {
        (Value::Missing, _) => 1.0,
        (Value::Num(x), CentroidComponent::Continuous(c)) => (x - c).abs(),
        (Value::Cat(r), CentroidComponent::Ordinal { rank, levels }) => {
            (*r as f64 - rank).abs() / (*levels as f64 - 1.0)
        }
        (Value::Cat(c), CentroidComponent::Symbolic { representative, .. }) => {
            if c == representative {
                0.0
            } else {
                1.0
            }
        }
        _ => 0.0,
    }
}

pub fn distance_squared(x: &[Value], v: &[CentroidComponent], weights: &FeatureWeights) -> f64 {
    x.iter()
        .zip(v)
        .zip(&weights.weights)
        .map(|((xq, vq), g)| {
            let d = feature_distance(xq, vq);
            g * d * d
        })
        .sum()
}

/// Membership row for one instance given its squared distances to every
/// centroid. Zero distances take the whole mass, split evenly.
pub fn memberships_from_distances(d2: &[f64], alpha: f64) -> Vec<f64> {
    let zeros = d2.iter().filter(|&&d| d == 0.0).count();
    if zeros > 0 {
        let share = 1.0 / zeros as f64;
        return d2
            .iter()
            .map(|&d| if d == 0.0 { share } else { 0.0 })
            .collect();
    }
    // (1/d²)^e computed in log space
    let e = 1.0 / (alpha - 1.0);
    let logs: Vec<f64> = d2.iter().map(|&d| -e * d.ln()).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logs.iter().map(|&l| (l - top).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|&x| x / total).collect()
}

pub fn memberships_for(
    x: &[Value],
    v: &CentroidSet,
    alpha: f64,
    weights: &FeatureWeights,
) -> Vec<f64> {
    let d2: Vec<f64> = v
        .centroids
        .iter()
        .map(|c| distance_squared(x, c, weights))
        .collect();
    memberships_from_distances(&d2, alpha)
}

pub fn update_memberships(
    x: &[Vec<Value>],
    v: &CentroidSet,
    cfg: &FcmConfig,
    weights: &FeatureWeights,
) -> MembershipMatrix {
    MembershipMatrix {
        rows: x
            .par_iter()
            .map(|row| memberships_for(row, v, cfg.alpha, weights))
            .collect(),
    }
}

/// One centroid from `w^α`-weighted sums; `None` when the cluster carries
/// no mass.
fn weighted_centroid(
    x: &[Vec<Value>],
    mass: &[f64],
    schema: &FeatureSchema,
) -> Option<Vec<CentroidComponent>> {
    let total: f64 = mass.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return None;
    }
    let comps = schema
        .features
        .iter()
        .enumerate()
        .map(|(q, f)| match f.kind {
            FeatureKind::Continuous | FeatureKind::Ordinal => {
                let (mut num, mut den) = (0.0, 0.0);
                for (row, &u) in x.iter().zip(mass) {
                    if let Some(v) = row[q].as_f64() {
                        num += u * v;
                        den += u;
                    }
                }
                let mean = if den > 0.0 { num / den } else { 0.0 };
                if f.kind == FeatureKind::Continuous {
                    CentroidComponent::Continuous(mean)
                } else {
                    CentroidComponent::Ordinal {
                        rank: mean,
                        levels: f.cardinality(),
                    }
                }
            }
            FeatureKind::Symbolic => {
                let mut weights = vec![0.0; f.cardinality()];
                for (row, &u) in x.iter().zip(mass) {
                    if let Value::Cat(c) = row[q] {
                        weights[c as usize] += u;
                    }
                }
                symbolic_component(weights)
            }
        })
        .collect();
    Some(comps)
}

fn symbolic_component(mut weights: Vec<f64>) -> CentroidComponent {
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        weights.iter_mut().for_each(|w| *w /= total);
    } else if !weights.is_empty() {
        let u = 1.0 / weights.len() as f64;
        weights.iter_mut().for_each(|w| *w = u);
    }
    let representative = if weights.is_empty() {
        0
    } else {
        argmax(&weights) as u32
    };
    CentroidComponent::Symbolic {
        weights,
        representative,
    }
}

fn centroids_or_none(
    x: &[Vec<Value>],
    w: &MembershipMatrix,
    schema: &FeatureSchema,
    alpha: f64,
) -> Vec<Option<Vec<CentroidComponent>>> {
    (0..w.k())
        .into_par_iter()
        .map(|j| {
            let mass: Vec<f64> = w.rows.iter().map(|r| r[j].powf(alpha)).collect();
            weighted_centroid(x, &mass, schema)
        })
        .collect()
}

pub fn update_centroids(
    x: &[Vec<Value>],
    w: &MembershipMatrix,
    schema: &FeatureSchema,
    cfg: &FcmConfig,
) -> Result<CentroidSet> {
    if w.n() != x.len() {
        return Err(Error::LengthMismatch {
            left: w.n(),
            right: x.len(),
        });
    }
    let centroids = centroids_or_none(x, w, schema, cfg.alpha)
        .into_iter()
        .enumerate()
        .map(|(j, c)| c.ok_or(Error::DegenerateCluster { cluster: j }))
        .collect::<Result<Vec<_>>>()?;
    Ok(CentroidSet { centroids })
}

pub fn objective(
    x: &[Vec<Value>],
    w: &MembershipMatrix,
    v: &CentroidSet,
    cfg: &FcmConfig,
    weights: &FeatureWeights,
) -> f64 {
    x.iter()
        .zip(&w.rows)
        .map(|(row, wr)| {
            wr.iter()
                .zip(&v.centroids)
                .map(|(&wij, c)| wij.powf(cfg.alpha) * distance_squared(row, c, weights))
                .sum::<f64>()
        })
        .sum()
}

/// A centroid placed on a single instance.
pub fn centroid_from_instance(row: &[Value], schema: &FeatureSchema) -> Vec<CentroidComponent> {
    row.iter()
        .zip(&schema.features)
        .map(|(v, f)| match f.kind {
            FeatureKind::Continuous => CentroidComponent::Continuous(v.as_f64().unwrap_or(0.0)),
            FeatureKind::Ordinal => CentroidComponent::Ordinal {
                rank: v.as_f64().unwrap_or(0.0),
                levels: f.cardinality(),
            },
            FeatureKind::Symbolic => {
                let mut weights = vec![0.0; f.cardinality()];
                if let Value::Cat(c) = v {
                    weights[*c as usize] = 1.0;
                }
                symbolic_component(weights)
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FcmFit {
    pub memberships: MembershipMatrix,
    pub centroids: CentroidSet,
    /// Number of membership updates performed.
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each membership update.
    pub objective_trace: Vec<f64>,
    /// Number of empty clusters re-seeded along the way.
    pub reseeds: usize,
}

/// Alternating optimization from `k` distinct random instances. Every
/// iteration starts with a membership update, and the loop always ends right
/// after one, so the returned memberships are exactly those implied by the
/// returned centroids.
pub fn fit(
    x: &[Vec<Value>],
    schema: &FeatureSchema,
    cfg: &FcmConfig,
    weights: &FeatureWeights,
) -> Result<FcmFit> {
    cfg.validate()?;
    let n = x.len();
    if n < cfg.k {
        return Err(Error::TooFewInstances { n, k: cfg.k });
    }
    if weights.len() != schema.len() {
        return Err(Error::LengthMismatch {
            left: weights.len(),
            right: schema.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut picks = rand::seq::index::sample(&mut rng, n, cfg.k).into_vec();
    picks.sort_unstable();
    let mut centroids = CentroidSet {
        centroids: picks
            .iter()
            .map(|&i| centroid_from_instance(&x[i], schema))
            .collect(),
    };

    let mut previous: Option<MembershipMatrix> = None;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut reseeds = 0;
    let mut iterations = 0;
    loop {
        let w = update_memberships(x, &centroids, cfg, weights);
        iterations += 1;
        let j = objective(x, &w, &centroids, cfg, weights);
        if let Some(prev) = &previous {
            converged = match cfg.criterion {
                ConvergenceCriterion::MembershipDelta => w.max_abs_diff(prev) < cfg.tolerance,
                ConvergenceCriterion::ObjectiveDelta => {
                    let last = *trace.last().unwrap_or(&j);
                    (last - j).abs() <= cfg.tolerance * last.abs()
                }
            };
        }
        trace.push(j);
        if converged || iterations >= cfg.max_iterations {
            return Ok(FcmFit {
                memberships: w,
                centroids,
                iterations,
                converged,
                objective_trace: trace,
                reseeds,
            });
        }

        let mut next = centroids_or_none(x, &w, schema, cfg.alpha);
        if next.iter().any(Option::is_none) {
            reseeds += reseed_empty(x, &mut next, schema, weights);
        }
        centroids = CentroidSet {
            centroids: next.into_iter().map(Option::unwrap).collect(),
        };
        previous = Some(w);
    }
}

/// Fills empty clusters with the instance farthest from its nearest live
/// centroid. Returns the number of clusters filled.
fn reseed_empty(
    x: &[Vec<Value>],
    next: &mut [Option<Vec<CentroidComponent>>],
    schema: &FeatureSchema,
    weights: &FeatureWeights,
) -> usize {
    let mut filled = 0;
    for j in 0..next.len() {
        if next[j].is_some() {
            continue;
        }
        let nearest: Vec<f64> = x
            .iter()
            .map(|row| {
                next.iter()
                    .flatten()
                    .map(|c| distance_squared(row, c, weights))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let far = argmax(&nearest);
        next[j] = Some(centroid_from_instance(&x[far], schema));
        filled += 1;
    }
    filled
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Feature;

    fn one_d(points: &[f64]) -> (Vec<Vec<Value>>, FeatureSchema) {
        let schema = FeatureSchema::new(vec![Feature::continuous("x")]).unwrap();
        (
            points.iter().map(|&p| vec![Value::Num(p)]).collect(),
            schema,
        )
    }

    #[test]
    fn feature_distance_cases() {
        let udp_rep = CentroidComponent::Symbolic {
            weights: vec![0.2, 0.8],
            representative: 1,
        };
        assert_eq!(feature_distance(&Value::Cat(0), &udp_rep), 1.0);
        assert_eq!(feature_distance(&Value::Cat(1), &udp_rep), 0.0);
        assert_eq!(
            feature_distance(&Value::Num(0.7), &CentroidComponent::Continuous(0.7)),
            0.0
        );
        let ord = CentroidComponent::Ordinal {
            rank: 3.0,
            levels: 5,
        };
        assert_eq!(feature_distance(&Value::Cat(1), &ord), 0.5);
        assert_eq!(feature_distance(&Value::Missing, &ord), 1.0);
    }

    #[test]
    fn distance_squared_arithmetic() {
        let x = [Value::Num(0.5), Value::Cat(0)];
        let v = [
            CentroidComponent::Continuous(0.0),
            CentroidComponent::Symbolic {
                weights: vec![0.0, 1.0],
                representative: 1,
            },
        ];
        let w = FeatureWeights {
            weights: vec![2.0, 1.0],
            bins: 10,
        };
        assert_eq!(distance_squared(&x, &v, &w), 1.5);
        let same = [CentroidComponent::Continuous(0.5), v[1].clone()];
        assert_eq!(
            distance_squared(&[Value::Num(0.5), Value::Cat(1)], &same, &w),
            0.0
        );
    }

    #[test]
    fn membership_examples() {
        assert_eq!(memberships_from_distances(&[2.0, 2.0], 3.0), vec![0.5, 0.5]);
        assert_eq!(
            memberships_from_distances(&[0.0, 1.0, 4.0], 3.0),
            vec![1.0, 0.0, 0.0]
        );
        assert_eq!(
            memberships_from_distances(&[0.0, 1.0, 0.0], 3.0),
            vec![0.5, 0.0, 0.5]
        );
        let w = memberships_from_distances(&[1.0, 4.0], 3.0);
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(memberships_from_distances(&[7.0], 3.0), vec![1.0]);
    }

    #[test]
    fn centroid_examples() {
        let (x, schema) = one_d(&[0.0, 1.0]);
        let cfg = FcmConfig::new(1);
        let w = MembershipMatrix {
            rows: vec![vec![0.8], vec![0.2]],
        };
        let v = update_centroids(&x, &w, &schema, &cfg).unwrap();
        let expect = 0.2f64.powi(3) / (0.8f64.powi(3) + 0.2f64.powi(3));
        match v.centroids[0][0] {
            CentroidComponent::Continuous(c) => {
                assert!((c - expect).abs() < 1e-15);
                assert!((c - 0.01538).abs() < 1e-5);
            }
            _ => unreachable!(),
        }

        let (x, schema) = one_d(&[1.0, 2.0, 6.0]);
        let uniform = MembershipMatrix {
            rows: vec![vec![0.5, 1.0]; 3],
        };
        let single = MembershipMatrix {
            rows: vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        let v = update_centroids(&x, &uniform, &schema, &FcmConfig::new(2)).unwrap();
        assert_eq!(v.centroids[0][0], CentroidComponent::Continuous(3.0));
        let v = update_centroids(&x, &single, &schema, &FcmConfig::new(2)).unwrap();
        assert_eq!(v.centroids[0][0], CentroidComponent::Continuous(2.0));
        assert_eq!(v.centroids[1][0], CentroidComponent::Continuous(6.0));

        let dead = MembershipMatrix {
            rows: vec![vec![1.0, 0.0]; 3],
        };
        assert!(matches!(
            update_centroids(&x, &dead, &schema, &FcmConfig::new(2)),
            Err(Error::DegenerateCluster { cluster: 1 })
        ));
    }

    #[test]
    fn symbolic_centroid_keeps_weighted_distribution() {
        let schema =
            FeatureSchema::new(vec![Feature::symbolic("p", ["tcp", "udp", "icmp"])]).unwrap();
        let x = vec![
            vec![Value::Cat(0)],
            vec![Value::Cat(1)],
            vec![Value::Cat(1)],
            vec![Value::Missing],
        ];
        let w = MembershipMatrix {
            rows: vec![vec![1.0], vec![0.5], vec![0.5], vec![1.0]],
        };
        let cfg = FcmConfig {
            alpha: 2.0,
            ..FcmConfig::new(1)
        };
        let v = update_centroids(&x, &w, &schema, &cfg).unwrap();
        // masses: tcp 1, udp 0.25 + 0.25
        assert_eq!(
            v.centroids[0][0],
            CentroidComponent::Symbolic {
                weights: vec![2.0 / 3.0, 1.0 / 3.0, 0.0],
                representative: 0
            }
        );
    }

    #[test]
    fn fit_separates_two_groups() {
        let (x, schema) = one_d(&[0.0, 0.05, 0.1, 0.12, 0.9, 0.95, 1.0, 0.97]);
        let fit = fit(
            &x,
            &schema,
            &FcmConfig::new(2).with_seed(3),
            &FeatureWeights::uniform(1),
        )
        .unwrap();
        assert!(fit.converged);
        let z: Vec<usize> = fit.memberships.rows.iter().map(|r| argmax(r)).collect();
        assert!(z[..4].iter().all(|&c| c == z[0]));
        assert!(z[4..].iter().all(|&c| c == z[4]));
        assert_ne!(z[0], z[4]);
    }

    #[test]
    fn fit_k1_and_determinism() {
        let (x, schema) = one_d(&[0.0, 0.2, 0.9]);
        let f = fit(&x, &schema, &FcmConfig::new(1), &FeatureWeights::uniform(1)).unwrap();
        assert!(f.memberships.rows.iter().all(|r| r == &vec![1.0]));
        match f.centroids.centroids[0][0] {
            CentroidComponent::Continuous(c) => assert!((c - 1.1 / 3.0).abs() < 1e-15),
            _ => unreachable!(),
        }

        let (x, schema) = one_d(&[0.0, 0.3, 0.31, 0.6, 0.62, 1.0]);
        let cfg = FcmConfig::new(3).with_seed(11);
        let a = fit(&x, &schema, &cfg, &FeatureWeights::uniform(1)).unwrap();
        let b = fit(&x, &schema, &cfg, &FeatureWeights::uniform(1)).unwrap();
        assert_eq!(a.memberships, b.memberships);
        assert_eq!(a.centroids, b.centroids);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let (x, schema) = one_d(&[0.0, 1.0]);
        let w = FeatureWeights::uniform(1);
        assert!(matches!(
            fit(&x, &schema, &FcmConfig::new(3), &w),
            Err(Error::TooFewInstances { n: 2, k: 3 })
        ));
        let bad = FcmConfig {
            alpha: 1.0,
            ..FcmConfig::new(2)
        };
        assert!(fit(&x, &schema, &bad, &w).is_err());
    }

    #[test]
    fn objective_zero_on_crisp_fit() {
        let (x, schema) = one_d(&[0.25, 0.75]);
        let w = MembershipMatrix {
            rows: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        let cfg = FcmConfig::new(2);
        let v = update_centroids(&x, &w, &schema, &cfg).unwrap();
        assert_eq!(
            objective(&x, &w, &v, &cfg, &FeatureWeights::uniform(1)),
            0.0
        );
    }

    #[test]
    fn scaling_weights_leaves_memberships_unchanged() {
        let (x, schema) = one_d(&[0.0, 0.1, 0.4, 0.5, 0.8, 0.95]);
        let cfg = FcmConfig::new(2).with_seed(5);
        let w1 = FeatureWeights::uniform(1);
        let w7 = FeatureWeights {
            weights: vec![7.5],
            bins: 10,
        };
        let a = fit(&x, &schema, &cfg, &w1).unwrap();
        let b = fit(&x, &schema, &cfg, &w7).unwrap();
        for (ra, rb) in a.memberships.rows.iter().zip(&b.memberships.rows) {
            for (p, q) in ra.iter().zip(rb) {
                assert!((p - q).abs() < 1e-9);
            }
        }
    }
}
