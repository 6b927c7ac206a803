use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};

use super::{classify, evaluate, induce, EvaluationReport, InducerSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified q-fold partition. Strata are visited in ascending tag order;
/// each is shuffled and the concatenation is dealt round-robin, so every
/// stratum's per-fold counts differ by at most one.
pub fn stratified_folds(strata: &[u32], q: usize, seed: u64) -> Result<Vec<Fold>> {
    let n = strata.len();
    if q < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {q}")));
    }
    if q > n {
        return Err(Error::invalid(format!(
            "{q} folds requested for {n} instances"
        )));
    }
    let groups = strata.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); groups];
    for (i, &s) in strata.iter().enumerate() {
        members[s as usize].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; n];
    let mut position = 0;
    for group in &mut members {
        group.shuffle(&mut rng);
        for &i in group.iter() {
            fold_of[i] = position % q;
            position += 1;
        }
    }
    Ok((0..q)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| fold_of[i] == f);
            Fold { train, test }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    /// Unweighted mean of per-fold overall accuracy.
    pub mean_accuracy: f64,
    pub folds: Vec<EvaluationReport>,
}

pub fn cross_validate(
    d: &Dataset,
    spec: &InducerSpec,
    q: usize,
    strata: &[u32],
    seed: u64,
) -> Result<CvOutcome> {
    if strata.len() != d.n() {
        return Err(Error::LengthMismatch {
            left: strata.len(),
            right: d.n(),
        });
    }
    let folds = stratified_folds(strata, q, seed)?;
    let reports = folds
        .par_iter()
        .map(|fold| {
            let model = induce(&d.subset(&fold.train), spec)?;
            let predicted = fold
                .test
                .iter()
                .map(|&i| classify(&model, &d.rows[i]).map(|p| p.class))
                .collect::<Result<Vec<_>>>()?;
            let truth: Vec<u32> = fold.test.iter().map(|&i| d.labels[i]).collect();
            evaluate(&predicted, &truth, &d.classes)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_accuracy = reports.iter().map(|r| r.accuracy).sum::<f64>() / reports.len() as f64;
    Ok(CvOutcome {
        mean_accuracy,
        folds: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Feature, FeatureSchema, Value};
    use rand::Rng;

    #[test]
    fn equal_classes_split_evenly() {
        let strata: Vec<u32> = (0..100).map(|i| (i % 2) as u32).collect();
        let folds = stratified_folds(&strata, 10, 3).unwrap();
        for f in &folds {
            let ones = f.test.iter().filter(|&&i| strata[i] == 1).count();
            assert_eq!(f.test.len(), 10);
            assert_eq!(ones, 5);
        }
    }

    #[test]
    fn small_stratum_pigeonholes() {
        let mut strata = vec![0u32; 93];
        strata.extend([1u32; 7]);
        let folds = stratified_folds(&strata, 10, 9).unwrap();
        let per_fold: Vec<usize> = folds
            .iter()
            .map(|f| f.test.iter().filter(|&&i| strata[i] == 1).count())
            .collect();
        assert_eq!(per_fold.iter().filter(|&&c| c == 1).count(), 7);
        assert_eq!(per_fold.iter().filter(|&&c| c == 0).count(), 3);
    }

    #[test]
    fn folds_partition_indices() {
        let strata: Vec<u32> = (0..37).map(|i| (i % 3) as u32).collect();
        let folds = stratified_folds(&strata, 5, 1).unwrap();
        let mut all: Vec<usize> = folds.iter().flat_map(|f| f.test.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
        for f in &folds {
            assert_eq!(f.train.len() + f.test.len(), 37);
            assert!(f.train.iter().all(|i| !f.test.contains(i)));
        }
        assert!(stratified_folds(&strata, 38, 1).is_err());
        assert!(stratified_folds(&strata, 1, 1).is_err());
    }

    fn dataset(values: &[f64], labels: &[u32]) -> Dataset {
        let schema = FeatureSchema::new(vec![Feature::continuous("x")]).unwrap();
        let rows = values.iter().map(|&v| vec![Value::Num(v)]).collect();
        let names: Vec<String> = labels.iter().map(|l| format!("c{l}")).collect();
        Dataset::new(schema, rows, &names).unwrap()
    }

    #[test]
    fn separable_data_scores_one_and_is_deterministic() {
        let values: Vec<f64> = (0..100)
            .map(|i| (i + if i >= 50 { 100 } else { 0 }) as f64)
            .collect();
        let labels: Vec<u32> = (0..100).map(|i| u32::from(i >= 50)).collect();
        let d = dataset(&values, &labels);
        let spec = InducerSpec::default();
        let a = cross_validate(&d, &spec, 10, &d.strata(), 4).unwrap();
        assert_eq!(a.mean_accuracy, 1.0);
        let b = cross_validate(&d, &spec, 10, &d.strata(), 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shuffled_labels_score_near_half() {
        let mut total = 0.0;
        let seeds = 20;
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let values: Vec<f64> = (0..200).map(|_| rng.random()).collect();
            let mut labels: Vec<u32> = (0..200).map(|i| (i % 2) as u32).collect();
            labels.shuffle(&mut rng);
            let d = dataset(&values, &labels);
            total += cross_validate(&d, &InducerSpec::default(), 10, &d.strata(), seed)
                .unwrap()
                .mean_accuracy;
        }
        let mean = total / seeds as f64;
        assert!((mean - 0.5).abs() <= 0.1, "mean accuracy {mean}");
    }
}
