//! Parameter sampling, snapshot matrices, scaling, magnitude labels and persistence.

mod io;
mod sampling;

pub use io::{read_container, read_snapshots, write_container, write_snapshot_csv, write_snapshots, Container};
pub use sampling::{midpoints, sample_parameters, SamplePlan, SampleStrategy};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::fom::{FomError, FomProblem};
use crate::linalg::DenseMatrix;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("invalid sample plan: {0}")]
    Plan(String),
    #[error("full-order solve failed for μ = {params:?}: {source}")]
    Solve { params: Vec<f64>, source: FomError },
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("invalid split: {0}")]
    Split(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("malformed container: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Affine min-max map `x ↦ (x − min) / (max − min)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scaling {
    pub min: f64,
    pub max: f64,
}

impl Scaling {
    pub fn fit(values: &[f64]) -> Result<Self, DatasetError> {
        let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if !(max > min) {
            return Err(DatasetError::Degenerate(format!("constant data (min = max = {min})")));
        }
        Ok(Self { min, max })
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn invert(&self, y: f64) -> f64 {
        self.min + y * (self.max - self.min)
    }
}

/// Paired parameter matrix `P` (rows `μ_1..μ_p, t`) and snapshot matrix `S`.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSet {
    pub p: DenseMatrix,
    pub s: DenseMatrix,
    /// Set when `s` holds scaled values.
    pub scaling: Option<Scaling>,
    /// 1-based class ids, one per column.
    pub labels: Option<Vec<u32>>,
}

impl SnapshotSet {
    pub fn new(p: DenseMatrix, s: DenseMatrix) -> Result<Self, DatasetError> {
        if p.cols() != s.cols() {
            return Err(DatasetError::Shape(format!("P has {} columns, S has {}", p.cols(), s.cols())));
        }
        if p.rows() < 2 {
            return Err(DatasetError::Shape("P needs at least one parameter row and a time row".into()));
        }
        Ok(Self { p, s, scaling: None, labels: None })
    }

    pub fn n_dofs(&self) -> usize {
        self.s.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.s.cols()
    }

    pub fn n_params(&self) -> usize {
        self.p.rows() - 1
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.s.column(j)
    }

    pub fn query(&self, j: usize) -> Vec<f64> {
        self.p.column(j)
    }

    /// `‖S_{:,j}‖_∞` for every column.
    pub fn column_norms_inf(&self) -> Vec<f64> {
        let mut out = vec![0.0_f64; self.n_cols()];
        for i in 0..self.n_dofs() {
            for (o, v) in out.iter_mut().zip(self.s.row(i)) {
                *o = o.max(v.abs());
            }
        }
        out
    }

    /// Columns at `idx`, in that order, with labels and scaling carried along.
    pub fn select(&self, idx: &[usize]) -> SnapshotSet {
        SnapshotSet {
            p: self.p.select_columns(idx),
            s: self.s.select_columns(idx),
            scaling: self.scaling,
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Raw snapshot values, undoing any scaling.
    pub fn unscaled(&self) -> SnapshotSet {
        match self.scaling {
            None => self.clone(),
            Some(sc) => {
                let mut out = self.clone();
                out.s.as_mut_slice().iter_mut().for_each(|v| *v = sc.invert(*v));
                out.scaling = None;
                out
            }
        }
    }
}

/// Solves the problem for every parameter vector and stacks the states
/// parameter-major, time-minor, including `t = 0`.
pub fn build_snapshots(problem: &FomProblem, params: &[Vec<f64>]) -> Result<SnapshotSet, DatasetError> {
    if params.is_empty() {
        return Err(DatasetError::Plan("no parameters to solve".into()));
    }
    let np = problem.n_params();
    let n_t = problem.grid().n_steps() + 1;
    let n_h = problem.n_dofs();
    let n_s = params.len() * n_t;
    let mut p = DenseMatrix::zeros(np + 1, n_s);
    let mut s = DenseMatrix::zeros(n_h, n_s);
    for (q, mu) in params.iter().enumerate() {
        let traj = problem.solve(mu).map_err(|source| DatasetError::Solve { params: mu.clone(), source })?;
        for (k, state) in traj.states.iter().enumerate() {
            let j = q * n_t + k;
            for (d, &m) in mu.iter().enumerate() {
                p[(d, j)] = m;
            }
            p[(np, j)] = traj.times[k];
            s.set_column(j, state);
        }
    }
    SnapshotSet::new(p, s)
}

/// Global min-max scaling of `S` to `[0, 1]`.
pub fn scale_minmax(set: &SnapshotSet) -> Result<SnapshotSet, DatasetError> {
    let raw = set.unscaled();
    let sc = Scaling::fit(raw.s.as_slice())?;
    let mut out = raw;
    out.s.as_mut_slice().iter_mut().for_each(|v| *v = sc.apply(*v));
    out.scaling = Some(sc);
    Ok(out)
}

/// Magnitude bands with strictly decreasing edges. Class `c` (1-based) holds
/// norms in `[edge_c, edge_{c−1})`; class 1 is `≥ edge_1`, the last class
/// is below the last edge.
#[derive(Clone, Debug, PartialEq)]
pub struct MagnitudeBands {
    edges: Vec<f64>,
}

impl MagnitudeBands {
    pub fn new(edges: Vec<f64>) -> Result<Self, DatasetError> {
        if edges.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(DatasetError::Plan("band edges must be positive and finite".into()));
        }
        if edges.windows(2).any(|w| w[1] >= w[0]) {
            return Err(DatasetError::Plan("band edges must be strictly decreasing".into()));
        }
        Ok(Self { edges })
    }

    pub fn burgers() -> Self {
        Self { edges: vec![1e-2, 1e-4, 1e-6, 1e-8, 1e-10] }
    }

    pub fn parabolic() -> Self {
        Self { edges: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5] }
    }

    /// A single band covering everything.
    pub fn single() -> Self {
        Self { edges: Vec::new() }
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn n_classes(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn classify(&self, norm: f64) -> u32 {
        1 + self.edges.iter().filter(|&&e| norm < e).count() as u32
    }

    /// Human-readable interval of class `c`.
    pub fn describe(&self, c: u32) -> String {
        let c = c as usize;
        match (c, self.edges.len()) {
            (1, 0) => "all".into(),
            (1, _) => format!(">= {:e}", self.edges[0]),
            (c, n) if c == n + 1 => format!("< {:e}", self.edges[n - 1]),
            (c, _) => format!("[{:e}, {:e})", self.edges[c - 1], self.edges[c - 2]),
        }
    }
}

/// Labels each column by the band of its `ℓ∞` norm. Expects raw values.
pub fn label_by_magnitude(set: &SnapshotSet, bands: &MagnitudeBands) -> Vec<u32> {
    set.unscaled().column_norms_inf().into_iter().map(|n| bands.classify(n)).collect()
}

/// Count of columns per class id `1..=n_c`.
pub fn class_counts(labels: &[u32], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; n_classes];
    for &l in labels {
        counts[l as usize - 1] += 1;
    }
    counts
}

/// `max_j ‖S_j‖_∞ / min_j ‖S_j‖_∞`; `+∞` when some column vanishes.
pub fn gamma_severity(set: &SnapshotSet) -> f64 {
    let norms = set.unscaled().column_norms_inf();
    let max = norms.iter().cloned().fold(0.0, f64::max);
    let min = norms.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        log::warn!("zero snapshot column, severity is unbounded");
        return f64::INFINITY;
    }
    max / min
}

/// Shuffles columns with `seed` and splits off the first `round(ratio·N_s)`.
pub fn split_train_val(set: &SnapshotSet, ratio: f64, seed: u64) -> Result<(SnapshotSet, SnapshotSet), DatasetError> {
    let (a, b) = split_indices(set.n_cols(), ratio, seed)?;
    Ok((set.select(&a), set.select(&b)))
}

/// Index form of [`split_train_val`].
pub fn split_indices(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DatasetError::Split(format!("ratio must lie in (0, 1), got {ratio}")));
    }
    let n_first = (ratio * n as f64).round() as usize;
    if n_first == 0 || n_first == n {
        return Err(DatasetError::Split(format!("{n} columns at ratio {ratio} leave an empty part")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let second = idx.split_off(n_first);
    Ok((idx, second))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fom::{BurgersConfig, Mesh1D, TimeGrid};

    fn toy(s: Vec<Vec<f64>>) -> SnapshotSet {
        let n = s[0].len();
        let p = DenseMatrix::from_fn(2, n, |i, j| (i * n + j) as f64);
        SnapshotSet::new(p, DenseMatrix::from_rows(&s).unwrap()).unwrap()
    }

    #[test]
    fn scaling_examples() {
        let set = toy(vec![vec![-1.0, 3.0]]);
        let sc = scale_minmax(&set).unwrap();
        assert_eq!(sc.s.as_slice(), &[0.0, 1.0]);
        let unit = toy(vec![vec![0.0, 0.25, 1.0]]);
        assert_eq!(scale_minmax(&unit).unwrap().s, unit.s);
        assert!(matches!(scale_minmax(&toy(vec![vec![2.0, 2.0]])), Err(DatasetError::Degenerate(_))));
    }

    #[test]
    fn band_edges_are_half_open() {
        let b = MagnitudeBands::burgers();
        assert_eq!(b.n_classes(), 6);
        assert_eq!(b.classify(5e-3), 2);
        assert_eq!(b.classify(1e-2), 1);
        assert_eq!(b.classify(0.0), 6);
        assert_eq!(b.classify(1e-10), 5);
        assert_eq!(b.describe(2), "[1e-4, 1e-2)");
        assert!(MagnitudeBands::new(vec![1e-2, 1e-1]).is_err());
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma_severity(&toy(vec![vec![1.0, 1.0], vec![-2.0, 2.0]])), 1.0);
        assert_eq!(gamma_severity(&toy(vec![vec![0.0, 1.0]])), f64::INFINITY);
        assert_eq!(gamma_severity(&toy(vec![vec![0.5, -4.0]])), 8.0);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let set = toy(vec![(0..10).map(|v| v as f64).collect()]);
        let (a, b) = split_train_val(&set, 0.8, 3).unwrap();
        assert_eq!((a.n_cols(), b.n_cols()), (8, 2));
        let (a2, _) = split_train_val(&set, 0.8, 3).unwrap();
        assert_eq!(a, a2);
        assert!(split_train_val(&set, 0.99, 3).is_err());
        assert!(split_train_val(&set, 1.0, 3).is_err());
    }

    #[test]
    fn snapshots_include_initial_state() {
        let cfg = BurgersConfig::new(Mesh1D::uniform(16, 1.0).unwrap(), TimeGrid::new(0.1, 2).unwrap());
        let problem = FomProblem::Burgers(cfg.clone());
        let set = build_snapshots(&problem, &[vec![3.0]]).unwrap();
        assert_eq!(set.n_cols(), 3);
        assert_eq!(set.column(0), crate::fom::burgers_initial(&cfg.mesh, 3.0).unwrap());
        assert_eq!(set.query(2), vec![3.0, 0.1]);
    }

    #[test]
    fn failing_solve_names_the_parameter() {
        let cfg = BurgersConfig::new(Mesh1D::uniform(16, 1.0).unwrap(), TimeGrid::new(0.1, 2).unwrap());
        let err = build_snapshots(&FomProblem::Burgers(cfg), &[vec![1.0], vec![-1.0]]).unwrap_err();
        match err {
            DatasetError::Solve { params, .. } => assert_eq!(params, vec![-1.0]),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn norms_ignore_scaling_for_labels() {
        let set = toy(vec![vec![5e-3, 1.0, 0.0]]);
        let labels = label_by_magnitude(&scale_minmax(&set).unwrap(), &MagnitudeBands::burgers());
        assert_eq!(labels, vec![2, 1, 6]);
        assert_eq!(class_counts(&labels, 6), vec![1, 1, 0, 0, 0, 1]);
    }
}
