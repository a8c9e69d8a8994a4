use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Running mean and population variance via Welford's recurrence.
///
/// The variance itself (rather than the sum of squared deviations) is the
/// stored quantity, so persisted statistics reload bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    count: u64,
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl RunningStats {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            var: vec![0.0; dim],
        }
    }

    /// Rebuilds statistics from a persisted (count, mean, population variance) triple.
    pub fn from_parts(count: u64, mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.len() != var.len() {
            return Err(Error::dims(
                "RunningStats::from_parts",
                mean.len(),
                var.len(),
            ));
        }
        if let Some(v) = var.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Validation(format!(
                "variance entry {v} is not a finite non-negative number"
            )));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("normalizer mean".into()));
        }
        if count == 0 && var.iter().any(|&v| v != 0.0) {
            return Err(Error::Validation("nonzero variance with zero count".into()));
        }
        Ok(Self { count, mean, var })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Sum of squared deviations, `variance · count`.
    pub fn m2(&self) -> Vec<f64> {
        let n = self.count as f64;
        self.var.iter().map(|v| v * n).collect()
    }

    /// Population variance (zeros when empty).
    pub fn variance(&self) -> Vec<f64> {
        self.var.clone()
    }

    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        if self.count == 0 && self.mean.is_empty() {
            self.mean = vec![0.0; x.len()];
            self.var = vec![0.0; x.len()];
        }
        if x.len() != self.mean.len() {
            return Err(Error::dims("RunningStats::push", self.mean.len(), x.len()));
        }
        self.count += 1;
        let n = self.count as f64;
        for ((m, v), &xi) in self.mean.iter_mut().zip(self.var.iter_mut()).zip(x) {
            let delta = xi - *m;
            *m += delta / n;
            // m2' = m2 + δ(x − μ'), divided through by n.
            *v += (delta * (xi - *m) - *v) / n;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    #[test]
    fn scalar_hand_arithmetic() {
        let mut s = RunningStats::new(1);
        for x in [1.0, 2.0, 3.0] {
            s.push(&[x]).unwrap();
        }
        assert_eq!(s.mean(), &[2.0]);
        assert!((s.variance()[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_observation() {
        let mut s = RunningStats::new(2);
        s.push(&[0.7, -3.0]).unwrap();
        assert_eq!(s.mean(), &[0.7, -3.0]);
        assert_eq!(s.variance(), vec![0.0, 0.0]);
    }

    #[test]
    fn empty_adopts_first_dimension() {
        let mut s = RunningStats::new(0);
        s.push(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.dim(), 3);
        assert!(s.push(&[1.0]).is_err());
    }

    #[test]
    fn matches_two_pass_on_random_vectors() {
        let mut rng = Rng::new(11, &[]);
        let data: Vec<Vec<f64>> = (0..1000)
            .map(|_| {
                (0..4)
                    .map(|j| 3.0 * j as f64 + (j + 1) as f64 * rng.gaussian())
                    .collect()
            })
            .collect();
        let mut s = RunningStats::new(4);
        for x in &data {
            s.push(x).unwrap();
        }
        let var = s.variance();
        for j in 0..4 {
            let mean = data.iter().map(|x| x[j]).sum::<f64>() / 1000.0;
            let bvar = data.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / 1000.0;
            assert!((s.mean()[j] - mean).abs() <= 1e-10 * (1.0 + mean.abs()));
            assert!((var[j] - bvar).abs() <= 1e-10 * (1.0 + bvar.abs()));
        }
    }

    #[test]
    fn from_parts_validates() {
        assert!(RunningStats::from_parts(3, vec![0.0], vec![-1.0]).is_err());
        assert!(RunningStats::from_parts(0, vec![0.0], vec![1.0]).is_err());
        assert!(RunningStats::from_parts(3, vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(RunningStats::from_parts(3, vec![f64::NAN], vec![1.0]).is_err());
    }

    proptest! {
        #[test]
        fn welford_equals_batch(xs in prop::collection::vec(-1e3f64..1e3, 1..200)) {
            let mut s = RunningStats::new(1);
            for &x in &xs {
                s.push(&[x]).unwrap();
            }
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            prop_assert!((s.mean()[0] - mean).abs() <= 1e-10 * (1.0 + mean.abs()));
            prop_assert!((s.variance()[0] - var).abs() <= 1e-10 * (1.0 + var.abs()));
        }

        #[test]
        fn persisted_variance_round_trips(v in 0.0f64..1e6, count in 1u64..100_000) {
            let s = RunningStats::from_parts(count, vec![0.5], vec![v]).unwrap();
            prop_assert_eq!(s.variance()[0].to_bits(), v.to_bits());
        }
    }
}
