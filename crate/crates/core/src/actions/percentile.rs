use serde::Serialize;

use crate::error::{RecourseError, Result};
use crate::model::Dataset;

/// Empirical CDF of every feature in a target population.
///
/// `Q_j(v)` is the fraction of sample values `<= v` (right-continuous), so
/// `Q_j(min) = 1/n` and `Q_j(max) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PercentileModel {
    feature_names: Vec<String>,
    samples: Vec<Vec<f64>>,
}

impl PercentileModel {
    pub fn new(feature_names: Vec<String>, mut samples: Vec<Vec<f64>>) -> Result<Self> {
        if feature_names.len() != samples.len() {
            return Err(RecourseError::Dimension {
                expected: feature_names.len(),
                got: samples.len(),
            });
        }
        for (name, column) in feature_names.iter().zip(samples.iter_mut()) {
            if column.is_empty() {
                return Err(RecourseError::feature(name, "no sample values to fit percentiles"));
            }
            if column.iter().any(|v| !v.is_finite()) {
                return Err(RecourseError::NonFinite { feature: name.clone() });
            }
            column.sort_by(f64::total_cmp);
        }
        Ok(PercentileModel { feature_names, samples })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn dim(&self) -> usize {
        self.samples.len()
    }

    pub fn sample_size(&self, j: usize) -> usize {
        self.samples[j].len()
    }

    pub fn cdf(&self, j: usize, v: f64) -> f64 {
        let column = &self.samples[j];
        column.partition_point(|s| *s <= v) as f64 / column.len() as f64
    }

    /// Restricts and reorders features to `names`.
    pub fn select(&self, names: &[String]) -> Result<PercentileModel> {
        let samples = names
            .iter()
            .map(|name| {
                self.feature_names
                    .iter()
                    .position(|n| n == name)
                    .map(|j| self.samples[j].clone())
                    .ok_or_else(|| RecourseError::MissingFeature(name.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PercentileModel {
            feature_names: names.to_vec(),
            samples,
        })
    }
}

pub fn fit_percentiles(data: &Dataset) -> Result<PercentileModel> {
    if data.is_empty() {
        return Err(RecourseError::input("cannot fit percentiles on an empty dataset"));
    }
    let samples = (0..data.feature_names().len())
        .map(|j| data.column(j).collect())
        .collect();
    PercentileModel::new(data.feature_names().to_vec(), samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ten() -> PercentileModel {
        PercentileModel::new(vec!["x".into()], vec![(1..=10).rev().map(f64::from).collect()]).unwrap()
    }

    #[test]
    fn cdf_examples() {
        let q = ten();
        assert_eq!(q.cdf(0, 5.0), 0.5);
        assert_eq!(q.cdf(0, 0.5), 0.0);
        assert_eq!(q.cdf(0, 10.0), 1.0);
        assert_eq!(q.cdf(0, 1.0), 0.1);
    }

    #[test]
    fn empty_column_is_rejected() {
        assert!(PercentileModel::new(vec!["x".into()], vec![vec![]]).is_err());
        let data = Dataset::new(vec!["x".into()], vec![], None).unwrap();
        assert!(fit_percentiles(&data).is_err());
    }

    proptest! {
        #[test]
        fn cdf_monotone_and_permutation_invariant(mut sample in proptest::collection::vec(-50.0f64..50.0, 1..40),
                                                   probes in proptest::collection::vec(-60.0f64..60.0, 1..20)) {
            let a = PercentileModel::new(vec!["x".into()], vec![sample.clone()]).unwrap();
            sample.reverse();
            let b = PercentileModel::new(vec!["x".into()], vec![sample.clone()]).unwrap();
            prop_assert_eq!(&a, &b);
            let mut probes = probes;
            probes.sort_by(f64::total_cmp);
            let values: Vec<f64> = probes.iter().map(|v| a.cdf(0, *v)).collect();
            prop_assert!(values.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(values.iter().all(|q| (0.0..=1.0).contains(q)));
            let min = sample.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!(a.cdf(0, min) > 0.0);
        }
    }
}
