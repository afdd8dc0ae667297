//! Relative errors and online timing.

use std::time::Instant;

use crate::linalg::{norm2, DenseMatrix};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("reference has zero norm")]
    ZeroReference,
    #[error("shape mismatch: {0}")]
    Shape(String),
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// `‖u − ũ‖₂ / ‖u‖₂`.
pub fn error_single(reference: &[f64], pred: &[f64]) -> Result<f64, MetricsError> {
    if reference.len() != pred.len() {
        return Err(MetricsError::Shape(format!("{} vs {}", reference.len(), pred.len())));
    }
    let d = norm2(reference);
    if d == 0.0 {
        return Err(MetricsError::ZeroReference);
    }
    Ok(diff_norm(reference, pred) / d)
}

/// `Σ_k ‖u^k − ũ^k‖ / Σ_k ‖u^k‖` over one trajectory; `None` when the reference vanishes.
pub fn trajectory_ratio<'a>(pairs: impl IntoIterator<Item = (&'a [f64], &'a [f64])>) -> Option<f64> {
    let (num, den) = pairs.into_iter().fold((0.0, 0.0), |(n, d), (r, p)| (n + diff_norm(r, p), d + norm2(r)));
    (den > 0.0).then(|| num / den)
}

/// Mean of the defined ratios and the number of excluded trajectories.
pub fn error_total(ratios: &[Option<f64>]) -> (f64, usize) {
    let ok: Vec<f64> = ratios.iter().flatten().copied().collect();
    let excluded = ratios.len() - ok.len();
    if excluded > 0 {
        log::warn!("{excluded} trajectories with zero reference excluded");
    }
    let mean = if ok.is_empty() { f64::NAN } else { ok.iter().sum::<f64>() / ok.len() as f64 };
    (mean, excluded)
}

/// Streaming form of [`error_total`] fed one instant at a time, trajectory by trajectory.
#[derive(Clone, Debug, Default)]
pub struct TotalAccumulator {
    current: Option<usize>,
    num: f64,
    den: f64,
    ratios: Vec<Option<f64>>,
}

impl TotalAccumulator {
    pub fn push(&mut self, trajectory: usize, reference: &[f64], pred: &[f64]) {
        if self.current != Some(trajectory) {
            self.flush();
            self.current = Some(trajectory);
        }
        self.num += diff_norm(reference, pred);
        self.den += norm2(reference);
    }

    fn flush(&mut self) {
        if self.current.is_some() {
            self.ratios.push((self.den > 0.0).then(|| self.num / self.den));
        }
        self.num = 0.0;
        self.den = 0.0;
    }

    pub fn finish(mut self) -> (f64, usize) {
        self.flush();
        error_total(&self.ratios)
    }
}

/// Index ranges of consecutive columns sharing the same parameter values
/// (all rows of `p` except the last).
pub fn trajectories(p: &DenseMatrix) -> Vec<std::ops::Range<usize>> {
    let np = p.rows() - 1;
    let mut out = Vec::new();
    let mut start = 0;
    for j in 1..=p.cols() {
        if j == p.cols() || (0..np).any(|i| p[(i, j)] != p[(i, start)]) {
            out.push(start..j);
            start = j;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstantError {
    pub column: usize,
    pub trajectory: usize,
    pub query: Vec<f64>,
    /// `None` where the reference vanishes.
    pub value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub model: String,
    pub n: usize,
    pub dataset: String,
    pub instants: Vec<InstantError>,
    pub per_trajectory: Vec<Option<f64>>,
    pub total: f64,
    pub excluded_instants: usize,
    pub excluded_trajectories: usize,
}

impl ErrorReport {
    /// Compares predictions column by column against the reference.
    pub fn compute(
        model: &str,
        n: usize,
        dataset: &str,
        p: &DenseMatrix,
        reference: &DenseMatrix,
        pred: &DenseMatrix,
    ) -> Result<Self, MetricsError> {
        if reference.shape() != pred.shape() || p.cols() != reference.cols() {
            return Err(MetricsError::Shape(format!("{:?} vs {:?}", reference.shape(), pred.shape())));
        }
        let trajs = trajectories(p);
        let mut instants = Vec::with_capacity(p.cols());
        let mut per_trajectory = Vec::with_capacity(trajs.len());
        for (k, r) in trajs.iter().enumerate() {
            let cols: Vec<(Vec<f64>, Vec<f64>)> = r.clone().map(|j| (reference.column(j), pred.column(j))).collect();
            per_trajectory.push(trajectory_ratio(cols.iter().map(|(a, b)| (a.as_slice(), b.as_slice()))));
            for (j, (a, b)) in r.clone().zip(&cols) {
                instants.push(InstantError {
                    column: j,
                    trajectory: k,
                    query: p.column(j),
                    value: error_single(a, b).ok(),
                });
            }
        }
        let excluded_instants = instants.iter().filter(|e| e.value.is_none()).count();
        let (total, excluded_trajectories) = error_total(&per_trajectory);
        Ok(Self {
            model: model.into(),
            n,
            dataset: dataset.into(),
            instants,
            per_trajectory,
            total,
            excluded_instants,
            excluded_trajectories,
        })
    }
}

/// [`error_total`] restricted to the columns whose label is `class`.
pub fn class_error(
    p: &DenseMatrix,
    reference: &DenseMatrix,
    pred: &DenseMatrix,
    labels: &[u32],
    class: u32,
) -> Option<f64> {
    let ratios: Vec<Option<f64>> = trajectories(p)
        .into_iter()
        .filter_map(|r| {
            let cols: Vec<usize> = r.filter(|&j| labels[j] == class).collect();
            if cols.is_empty() {
                return None;
            }
            let pairs: Vec<(Vec<f64>, Vec<f64>)> =
                cols.iter().map(|&j| (reference.column(j), pred.column(j))).collect();
            Some(trajectory_ratio(pairs.iter().map(|(a, b)| (a.as_slice(), b.as_slice()))))
        })
        .collect();
    let (e, _) = error_total(&ratios);
    e.is_finite().then_some(e)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingReport {
    pub kind: String,
    pub n: usize,
    pub n_dofs: usize,
    /// Seconds per query, warm-up excluded.
    pub samples: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

pub const MIN_REPS: usize = 5;
pub const WARMUP: usize = 2;

/// Times `query` `reps` times (at least five) after two warm-up calls.
pub fn time_online(kind: &str, n: usize, n_dofs: usize, reps: usize, query: impl FnMut()) -> TimingReport {
    let mut one: [TimedQuery; 1] = [(kind.to_string(), n, n_dofs, Box::new(query))];
    time_interleaved(&mut one, reps).pop().expect("one report")
}

/// Label, `n`, `n_dofs` and the query to time.
pub type TimedQuery<'a> = (String, usize, usize, Box<dyn FnMut() + 'a>);

/// Times every query round-robin, one call each per repetition, so slow
/// periods of the machine are shared across all of them.
pub fn time_interleaved(queries: &mut [TimedQuery], reps: usize) -> Vec<TimingReport> {
    for _ in 0..WARMUP {
        for q in queries.iter_mut() {
            (q.3)();
        }
    }
    let reps = reps.max(MIN_REPS);
    let mut samples = vec![Vec::with_capacity(reps); queries.len()];
    for _ in 0..reps {
        for (q, s) in queries.iter_mut().zip(&mut samples) {
            let t = Instant::now();
            (q.3)();
            s.push(t.elapsed().as_secs_f64());
        }
    }
    queries
        .iter()
        .zip(samples)
        .map(|(q, samples)| {
            let m = samples.len() as f64;
            let mean = samples.iter().sum::<f64>() / m;
            let std = (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / m).sqrt();
            TimingReport { kind: q.0.clone(), n: q.1, n_dofs: q.2, samples, mean, std }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_examples() {
        assert_eq!(error_single(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert_eq!(error_single(&[3.0, 4.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert!((error_single(&[3.0, 4.0], &[3.0, 0.0]).unwrap() - 0.8).abs() < 1e-15);
        assert!(matches!(error_single(&[0.0], &[1.0]), Err(MetricsError::ZeroReference)));
    }

    #[test]
    fn total_examples() {
        assert_eq!(error_total(&[Some(0.1), Some(0.3)]).0, 0.2);
        assert_eq!(error_total(&[Some(0.5), None]), (0.5, 1));
        let a = [1.0, 0.0];
        let z = [0.0, 0.0];
        assert_eq!(trajectory_ratio([(&a[..], &z[..])]), Some(1.0));
        assert_eq!(trajectory_ratio([(&z[..], &a[..])]), None);
    }

    #[test]
    fn grouping_by_parameter() {
        let p = DenseMatrix::from_rows(&[vec![1.0, 1.0, 2.0, 2.0, 2.0], vec![0.0, 1.0, 0.0, 1.0, 2.0]]).unwrap();
        assert_eq!(trajectories(&p), vec![0..2, 2..5]);
    }

    #[test]
    fn timing_has_min_reps() {
        let mut calls = 0;
        let r = time_online("noop", 1, 1, 1, || calls += 1);
        assert_eq!(r.samples.len(), MIN_REPS);
        assert_eq!(calls, MIN_REPS + WARMUP);
    }
}
