use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DatasetError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleStrategy {
    UniformRandom,
    /// Evenly spaced including endpoints, the same index along every axis.
    Equidistant,
    LatinHypercube,
}

/// Parameter sampling plan over a box.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePlan {
    pub strategy: SampleStrategy,
    pub count: usize,
    pub ranges: Vec<(f64, f64)>,
    pub seed: u64,
}

impl SamplePlan {
    pub fn new(strategy: SampleStrategy, count: usize, ranges: Vec<(f64, f64)>, seed: u64) -> Self {
        Self { strategy, count, ranges, seed }
    }

    fn validate(&self) -> Result<(), DatasetError> {
        if self.count == 0 {
            return Err(DatasetError::Plan("sample count must be at least 1".into()));
        }
        if self.ranges.is_empty() {
            return Err(DatasetError::Plan("no parameter ranges".into()));
        }
        for (d, &(lo, hi)) in self.ranges.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(DatasetError::Plan(format!("range {d} = [{lo}, {hi}] is degenerate")));
            }
        }
        Ok(())
    }
}

/// Draws parameter vectors according to `plan`; deterministic per seed.
pub fn sample_parameters(plan: &SamplePlan) -> Result<Vec<Vec<f64>>, DatasetError> {
    plan.validate()?;
    let n = plan.count;
    let dims = plan.ranges.len();
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let out = match plan.strategy {
        SampleStrategy::UniformRandom => {
            (0..n).map(|_| plan.ranges.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect()).collect()
        }
        SampleStrategy::Equidistant => (0..n)
            .map(|i| {
                let s = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                plan.ranges.iter().map(|&(lo, hi)| if i + 1 == n && n > 1 { hi } else { lo + s * (hi - lo) }).collect()
            })
            .collect(),
        SampleStrategy::LatinHypercube => {
            let mut samples = vec![vec![0.0; dims]; n];
            for (d, &(lo, hi)) in plan.ranges.iter().enumerate() {
                let mut strata: Vec<usize> = (0..n).collect();
                strata.shuffle(&mut rng);
                let width = (hi - lo) / n as f64;
                for (sample, &k) in samples.iter_mut().zip(&strata) {
                    let u: f64 = rng.gen();
                    sample[d] = (lo + (k as f64 + u) * width).min(hi);
                }
            }
            samples
        }
    };
    Ok(out)
}

/// Midpoints of consecutive sorted 1D values.
pub fn midpoints(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equidistant_includes_endpoints() {
        let plan = SamplePlan::new(SampleStrategy::Equidistant, 3, vec![(0.0, 1.0)], 0);
        assert_eq!(sample_parameters(&plan).unwrap(), vec![vec![0.0], vec![0.5], vec![1.0]]);
    }

    #[test]
    fn latin_hypercube_hits_every_stratum_once() {
        let ranges = vec![(1.0, 10.0), (0.1, 10.0)];
        let plan = SamplePlan::new(SampleStrategy::LatinHypercube, 300, ranges.clone(), 7);
        let s = sample_parameters(&plan).unwrap();
        for (d, &(lo, hi)) in ranges.iter().enumerate() {
            let mut seen = vec![0; 300];
            for x in &s {
                let k = (((x[d] - lo) / (hi - lo)) * 300.0).floor() as usize;
                seen[k.min(299)] += 1;
            }
            assert!(seen.iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn uniform_is_reproducible_and_in_range() {
        let plan = SamplePlan::new(SampleStrategy::UniformRandom, 20, vec![(0.5, 2.0)], 42);
        let a = sample_parameters(&plan).unwrap();
        let b = sample_parameters(&plan).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|x| (0.5..2.0).contains(&x[0])));
    }

    #[test]
    fn degenerate_plans_are_rejected() {
        let plan = SamplePlan::new(SampleStrategy::UniformRandom, 3, vec![(1.0, 1.0)], 0);
        assert!(matches!(sample_parameters(&plan), Err(DatasetError::Plan(_))));
        let plan = SamplePlan::new(SampleStrategy::UniformRandom, 0, vec![(0.0, 1.0)], 0);
        assert!(sample_parameters(&plan).is_err());
    }

    #[test]
    fn midpoints_of_sorted_values() {
        assert_eq!(midpoints(&[3.0, 1.0, 2.0]), vec![1.5, 2.5]);
    }
}
