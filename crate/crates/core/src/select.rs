//! Correlation-based feature subset selection.
//!
//! Correlations are symmetrical uncertainties between discretized columns.
//! A subset `S` of size `s` scores
//! `s * mean_su(f, class) / sqrt(s + s(s-1) * mean_su(f, g))`,
//! rewarding class correlation and penalizing redundancy. Subsets are found
//! with an elitist bitstring GA (or a greedy forward pass).

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::infogain::{categorical_columns, entropy_of_counts, information_gain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSubset {
    pub names: Vec<String>,
    pub merit: f64,
}

impl FeatureSubset {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneticSearchConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover: f64,
    pub mutation: f64,
    pub seed: u64,
}

impl Default for GeneticSearchConfig {
    fn default() -> Self {
        GeneticSearchConfig {
            population: 20,
            generations: 20,
            crossover: 0.6,
            mutation: 0.033,
            seed: 1,
        }
    }
}

impl GeneticSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::invalid("GA population must be at least 2"));
        }
        if self.generations < 1 {
            return Err(Error::invalid("GA needs at least one generation"));
        }
        for (name, p) in [("crossover", self.crossover), ("mutation", self.mutation)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!(
                    "{name} probability must lie in [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStrategy {
    Genetic,
    GreedyForward,
}

/// `2 * IG(a; b) / (H(a) + H(b))`, or 0 when both columns are constant.
pub fn symmetrical_uncertainty<A: Ord, B: Ord>(a: &[A], b: &[B]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let ha = crate::infogain::entropy(a)?;
    let hb = crate::infogain::entropy(b)?;
    if ha + hb <= 0.0 {
        return Ok(0.0);
    }
    let ig = information_gain(a, b)?;
    Ok((2.0 * ig / (ha + hb)).clamp(0.0, 1.0))
}

/// Dense integer coding of a categorical column (missing = code 0).
struct Coded {
    codes: Vec<u32>,
    cardinality: usize,
    entropy: f64,
}

impl Coded {
    fn new(col: &[Option<u32>]) -> Self {
        let codes: Vec<u32> = col.iter().map(|v| v.map_or(0, |c| c + 1)).collect();
        let cardinality = codes.iter().copied().max().unwrap_or(0) as usize + 1;
        let mut counts = vec![0usize; cardinality];
        for &c in &codes {
            counts[c as usize] += 1;
        }
        let entropy = entropy_of_counts(counts.iter().map(|&c| c as f64));
        Coded {
            codes,
            cardinality,
            entropy,
        }
    }

    fn su(&self, other: &Coded) -> f64 {
        let denom = self.entropy + other.entropy;
        if denom <= 0.0 {
            return 0.0;
        }
        let mut joint = vec![0usize; self.cardinality * other.cardinality];
        for (&a, &b) in self.codes.iter().zip(&other.codes) {
            joint[a as usize * other.cardinality + b as usize] += 1;
        }
        let hj = entropy_of_counts(joint.iter().map(|&c| c as f64));
        let ig = self.entropy + other.entropy - hj;
        (2.0 * ig / denom).clamp(0.0, 1.0)
    }
}

/// Feature-class and feature-feature symmetrical uncertainties.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationCache {
    pub names: Vec<String>,
    pub class_su: Vec<f64>,
    /// Symmetric, unit diagonal.
    pub pair_su: Vec<Vec<f64>>,
}

impl CorrelationCache {
    pub fn from_dataset(d: &Dataset, bins: usize) -> Result<Self> {
        let columns: Vec<Coded> = categorical_columns(d, bins)?
            .iter()
            .map(|c| Coded::new(c))
            .collect();
        let class = Coded::new(&d.labels.iter().map(|&l| Some(l)).collect::<Vec<_>>());
        let m = columns.len();
        let class_su: Vec<f64> = columns.par_iter().map(|c| c.su(&class)).collect();
        let upper: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|i| ((i + 1)..m).map(|j| columns[i].su(&columns[j])).collect())
            .collect();
        let mut pair_su = vec![vec![1.0; m]; m];
        for i in 0..m {
            for (off, &s) in upper[i].iter().enumerate() {
                let j = i + 1 + off;
                pair_su[i][j] = s;
                pair_su[j][i] = s;
            }
        }
        Ok(CorrelationCache {
            names: d.schema.names().map(str::to_string).collect(),
            class_su,
            pair_su,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    fn subset(&self, mask: &[bool], merit: f64) -> FeatureSubset {
        FeatureSubset {
            names: mask
                .iter()
                .zip(&self.names)
                .filter(|(&on, _)| on)
                .map(|(_, n)| n.clone())
                .collect(),
            merit,
        }
    }
}

/// Merit of the features at `subset` (any order, no repeats).
pub fn cfs_merit(subset: &[usize], cache: &CorrelationCache) -> f64 {
    let mut idx = subset.to_vec();
    idx.sort_unstable();
    let s = idx.len();
    if s == 0 {
        return 0.0;
    }
    let rcf = idx.iter().map(|&i| cache.class_su[i]).sum::<f64>() / s as f64;
    if s == 1 {
        return rcf;
    }
    let mut rff = 0.0;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            rff += cache.pair_su[i][j];
        }
    }
    rff /= (s * (s - 1) / 2) as f64;
    let s = s as f64;
    s * rcf / (s + s * (s - 1.0) * rff).sqrt()
}

/// Merit of a subset given by feature names.
pub fn cfs_merit_named(names: &[&str], cache: &CorrelationCache) -> Result<f64> {
    let idx = names
        .iter()
        .map(|n| {
            cache
                .names
                .iter()
                .position(|c| c == n)
                .ok_or_else(|| Error::invalid(format!("unknown feature {n:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(cfs_merit(&idx, cache))
}

fn mask_merit(mask: &[bool], cache: &CorrelationCache) -> f64 {
    let idx: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter(|(_, &on)| on)
        .map(|(i, _)| i)
        .collect();
    cfs_merit(&idx, cache)
}

fn best_singleton(cache: &CorrelationCache) -> usize {
    crate::util::argmax(&cache.class_su)
}

/// Better of two scored masks: higher merit, then fewer features.
fn improves(candidate: (f64, usize), incumbent: (f64, usize)) -> bool {
    candidate.0 > incumbent.0 || (candidate.0 == incumbent.0 && candidate.1 < incumbent.1)
}

struct Scorer<'a> {
    cache: &'a CorrelationCache,
    seen: HashMap<Vec<bool>, f64>,
    best: (Vec<bool>, f64),
}

impl<'a> Scorer<'a> {
    fn score(&mut self, mask: &[bool]) -> f64 {
        if let Some(&m) = self.seen.get(mask) {
            return m;
        }
        let merit = mask_merit(mask, self.cache);
        self.seen.insert(mask.to_vec(), merit);
        let ones = mask.iter().filter(|&&b| b).count();
        let best_ones = self.best.0.iter().filter(|&&b| b).count();
        if improves((merit, ones), (self.best.1, best_ones)) {
            self.best = (mask.to_vec(), merit);
        }
        merit
    }
}

/// Elitist bitstring GA maximizing [`cfs_merit`]. Every singleton is scored
/// up front and the strongest ones seed half of the initial population, so
/// the result is never worse than the best single feature.
pub fn genetic_search(
    cache: &CorrelationCache,
    cfg: &GeneticSearchConfig,
) -> Result<FeatureSubset> {
    cfg.validate()?;
    let m = cache.len();
    if m == 0 {
        return Err(Error::invalid("no candidate features"));
    }
    let top = best_singleton(cache);
    let mut first = vec![false; m];
    first[top] = true;
    let mut scorer = Scorer {
        cache,
        seen: HashMap::new(),
        best: (first.clone(), cache.class_su[top]),
    };
    let mut singles: Vec<usize> = (0..m).collect();
    singles.sort_by(|&a, &b| {
        cache.class_su[b]
            .total_cmp(&cache.class_su[a])
            .then(a.cmp(&b))
    });
    for &i in &singles {
        let mut mask = vec![false; m];
        mask[i] = true;
        scorer.score(&mask);
    }
    if m == 1 {
        return Ok(cache.subset(&scorer.best.0, scorer.best.1));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let repair = |mask: &mut Vec<bool>| {
        if !mask.iter().any(|&b| b) {
            mask[top] = true;
        }
    };

    let injected = cfg.population.div_ceil(2).min(m);
    let mut population: Vec<Vec<bool>> = singles[..injected]
        .iter()
        .map(|&i| {
            let mut mask = vec![false; m];
            mask[i] = true;
            mask
        })
        .collect();
    while population.len() < cfg.population {
        let mut mask: Vec<bool> = (0..m).map(|_| rng.random_bool(0.5)).collect();
        repair(&mut mask);
        population.push(mask);
    }
    let mut fitness: Vec<f64> = population.iter().map(|p| scorer.score(p)).collect();

    for _ in 0..cfg.generations {
        let elite = crate::util::argmax(&fitness);
        let mut next = vec![population[elite].clone()];
        while next.len() < cfg.population {
            let pa = tournament(&fitness, &mut rng);
            let pb = tournament(&fitness, &mut rng);
            let (mut ca, mut cb) = (population[pa].clone(), population[pb].clone());
            if rng.random_bool(cfg.crossover) {
                let point = rng.random_range(1..m);
                for i in point..m {
                    std::mem::swap(&mut ca[i], &mut cb[i]);
                }
            }
            for child in [&mut ca, &mut cb] {
                for bit in child.iter_mut() {
                    if rng.random_bool(cfg.mutation) {
                        *bit = !*bit;
                    }
                }
                repair(child);
            }
            next.push(ca);
            if next.len() < cfg.population {
                next.push(cb);
            }
        }
        population = next;
        fitness = population.iter().map(|p| scorer.score(p)).collect();
    }
    Ok(cache.subset(&scorer.best.0, scorer.best.1))
}

fn tournament(fitness: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let a = rng.random_range(0..fitness.len());
    let b = rng.random_range(0..fitness.len());
    if fitness[b] > fitness[a] {
        b
    } else {
        a
    }
}

/// Adds the feature that raises merit most until nothing improves it.
pub fn greedy_forward(cache: &CorrelationCache) -> Result<FeatureSubset> {
    let m = cache.len();
    if m == 0 {
        return Err(Error::invalid("no candidate features"));
    }
    let mut chosen: Vec<usize> = Vec::new();
    let mut merit = f64::NEG_INFINITY;
    loop {
        let mut step: Option<(usize, f64)> = None;
        for f in (0..m).filter(|f| !chosen.contains(f)) {
            let mut trial = chosen.clone();
            trial.push(f);
            let score = cfs_merit(&trial, cache);
            if score > merit && step.is_none_or(|(_, s)| score > s) {
                step = Some((f, score));
            }
        }
        match step {
            Some((f, score)) => {
                chosen.push(f);
                merit = score;
            }
            None => break,
        }
    }
    let mut mask = vec![false; m];
    for f in chosen {
        mask[f] = true;
    }
    Ok(cache.subset(&mask, merit))
}

/// Runs the configured search over every feature of `d`.
pub fn select_features(
    d: &Dataset,
    bins: usize,
    strategy: SearchStrategy,
    ga: &GeneticSearchConfig,
) -> Result<FeatureSubset> {
    let cache = CorrelationCache::from_dataset(d, bins)?;
    match strategy {
        SearchStrategy::Genetic => genetic_search(&cache, ga),
        SearchStrategy::GreedyForward => greedy_forward(&cache),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Feature, FeatureSchema, Value};

    fn cache_of(class_su: Vec<f64>, pair_su: Vec<Vec<f64>>) -> CorrelationCache {
        CorrelationCache {
            names: (0..class_su.len()).map(|i| format!("f{i}")).collect(),
            class_su,
            pair_su,
        }
    }

    #[test]
    fn su_examples() {
        let a = [0, 1, 1, 0, 2];
        assert!((symmetrical_uncertainty(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(
            symmetrical_uncertainty(&[3, 3, 3], &[1, 2, 1]).unwrap(),
            0.0
        );
        // product distribution: every (x, y) pair once
        let x = [0, 0, 1, 1];
        let y = [0, 1, 0, 1];
        assert!(symmetrical_uncertainty(&x, &y).unwrap().abs() < 1e-15);
        assert!(symmetrical_uncertainty(&[1, 2], &[1]).is_err());
    }

    #[test]
    fn dense_su_agrees_with_generic() {
        let a: Vec<Option<u32>> = vec![Some(0), Some(1), None, Some(1), Some(2), Some(0), None];
        let b: Vec<Option<u32>> = vec![Some(1), Some(1), Some(0), None, Some(0), Some(1), Some(0)];
        let dense = Coded::new(&a).su(&Coded::new(&b));
        let generic = symmetrical_uncertainty(&a, &b).unwrap();
        assert!((dense - generic).abs() < 1e-12);
    }

    #[test]
    fn merit_examples() {
        let cache = cache_of(vec![0.6, 0.6], vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(cfs_merit(&[1], &cache), 0.6);
        assert!((cfs_merit(&[0, 1], &cache) - 0.6).abs() < 1e-15);
        assert_eq!(cfs_merit(&[0, 1], &cache), cfs_merit(&[1, 0], &cache));
    }

    /// Adding a column with zero class correlation but positive correlation
    /// to the existing features never raises merit; checked over a grid of
    /// 3-feature caches.
    #[test]
    fn redundant_uncorrelated_column_never_helps() {
        let grid = [0.0, 0.1, 0.3, 0.5, 0.8, 1.0];
        for &c0 in &grid {
            for &c1 in &grid {
                for &r01 in &grid {
                    for &r02 in &grid[1..] {
                        for &r12 in &grid[1..] {
                            let cache = cache_of(
                                vec![c0, c1, 0.0],
                                vec![
                                    vec![1.0, r01, r02],
                                    vec![r01, 1.0, r12],
                                    vec![r02, r12, 1.0],
                                ],
                            );
                            for base in [&[0usize][..], &[1], &[0, 1]] {
                                let mut with = base.to_vec();
                                with.push(2);
                                assert!(
                                    cfs_merit(&with, &cache) <= cfs_merit(base, &cache) + 1e-15
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    fn fixture(seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 120;
        let labels: Vec<u32> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let mut features = vec![Feature::symbolic("copy", ["0", "1"])];
        for q in 1..6 {
            features.push(Feature::symbolic(format!("noise{q}"), ["0", "1", "2"]));
        }
        let rows = labels
            .iter()
            .map(|&l| {
                let mut r = vec![Value::Cat(l)];
                r.extend((1..6).map(|_| Value::Cat(rng.random_range(0..3))));
                r
            })
            .collect();
        let names: Vec<String> = labels.iter().map(|l| l.to_string()).collect();
        Dataset::new(FeatureSchema::new(features).unwrap(), rows, &names).unwrap()
    }

    #[test]
    fn ga_finds_class_copy_and_is_deterministic() {
        let d = fixture(4);
        let cache = CorrelationCache::from_dataset(&d, 10).unwrap();
        // exhaustive optimum
        let m = cache.len();
        let best = (1u32..(1 << m))
            .map(|bits| {
                let idx: Vec<usize> = (0..m).filter(|i| bits & (1 << i) != 0).collect();
                cfs_merit(&idx, &cache)
            })
            .fold(f64::MIN, f64::max);
        let cfg = GeneticSearchConfig::default();
        let a = genetic_search(&cache, &cfg).unwrap();
        let b = genetic_search(&cache, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.names.contains(&"copy".to_string()));
        assert!((a.merit - best).abs() < 1e-9);
        let g = greedy_forward(&cache).unwrap();
        assert!(g.names.contains(&"copy".to_string()));
    }

    #[test]
    fn single_feature_search() {
        let cache = cache_of(vec![0.2], vec![vec![1.0]]);
        let s = genetic_search(&cache, &GeneticSearchConfig::default()).unwrap();
        assert_eq!(s.names, vec!["f0"]);
        assert_eq!(s.merit, 0.2);
    }
}
