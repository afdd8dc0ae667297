//! Multiclass RBF support vector machine, one-vs-one, trained by SMO.

use std::fmt::Write as _;
use std::path::Path;

use crate::linalg::DenseMatrix;

#[derive(Debug, thiserror::Error)]
pub enum SvmError {
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("expected {expected} features, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid setting: {0}")]
    Config(String),
    #[error("SMO did not converge within {0} iterations")]
    IterationLimit(usize),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const DEFAULT_C: f64 = 1.0;
pub const KKT_TOL: f64 = 1e-3;
pub const MAX_ITER: usize = 1_000_000;

/// How the kernel width is derived from the parameter matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarianceMode {
    /// One variance over every entry of `P`.
    Pooled,
    /// Mean of the per-row variances.
    PerFeature,
}

fn variance(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    v.map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// `1 / ((n_μ + 1) · Var(P))` for `P` with one row per feature.
pub fn svm_gamma_default(p: &DenseMatrix, mode: VarianceMode) -> Result<f64, SvmError> {
    let var = match mode {
        VarianceMode::Pooled => variance(p.as_slice().iter().copied()),
        VarianceMode::PerFeature => {
            (0..p.rows()).map(|i| variance(p.row(i).iter().copied())).sum::<f64>() / p.rows() as f64
        }
    };
    if !(var > 0.0) || p.is_empty() {
        return Err(SvmError::Degenerate("parameter matrix has zero variance".into()));
    }
    Ok(1.0 / (p.rows() as f64 * var))
}

fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    (-gamma * a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()).exp()
}

/// One binary problem: `f(x) = Σ coef_i K(sv_i, x) − rho`, positive for `pos`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinarySvm {
    pub pos: u32,
    pub neg: u32,
    pub support: Vec<Vec<f64>>,
    /// `α_i y_i` per support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
}

impl BinarySvm {
    pub fn decision(&self, gamma: f64, x: &[f64]) -> f64 {
        self.support.iter().zip(&self.coef).map(|(s, c)| c * rbf(gamma, s, x)).sum::<f64>() - self.rho
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    pub classes: Vec<u32>,
    /// Kernel width in standardized coordinates.
    pub gamma: f64,
    pub c: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub machines: Vec<BinarySvm>,
}

/// Outcome of one SMO solve, kept for diagnostics.
#[derive(Clone, Debug)]
pub struct SmoResult {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    /// Final `max_{I_up} −y G − min_{I_low} −y G`.
    pub gap: f64,
}

/// Solves `min ½ αᵀQα − Σα` s.t. `0 ≤ α ≤ C`, `yᵀα = 0` with maximal-violating-pair selection.
pub fn smo(kernel: &DenseMatrix, y: &[f64], c: f64, tol: f64, max_iter: usize) -> Result<SmoResult, SvmError> {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);
    let mut iterations = 0;
    loop {
        let (mut i, mut gmax) = (usize::MAX, f64::NEG_INFINITY);
        let (mut j, mut gmin) = (usize::MAX, f64::INFINITY);
        for t in 0..n {
            let v = -y[t] * grad[t];
            if up(alpha[t], y[t]) && v > gmax {
                (i, gmax) = (t, v);
            }
            if low(alpha[t], y[t]) && v < gmin {
                (j, gmin) = (t, v);
            }
        }
        let gap = gmax - gmin;
        if i == usize::MAX || j == usize::MAX || gap < tol {
            let rho = bias(&alpha, &grad, y, c, gmax, gmin);
            return Ok(SmoResult { alpha, rho, iterations, gap: gap.max(0.0) });
        }
        if iterations >= max_iter {
            return Err(SvmError::IterationLimit(max_iter));
        }
        iterations += 1;

        let a = (kernel[(i, i)] + kernel[(j, j)] - 2.0 * kernel[(i, j)]).max(1e-12);
        let mut lambda = gap / a;
        // α_i += y_i λ, α_j −= y_j λ
        let (lo_i, hi_i) = if y[i] > 0.0 { (-alpha[i], c - alpha[i]) } else { (alpha[i] - c, alpha[i]) };
        let (lo_j, hi_j) = if y[j] > 0.0 { (alpha[j] - c, alpha[j]) } else { (-alpha[j], c - alpha[j]) };
        lambda = lambda.clamp(lo_i.max(lo_j), hi_i.min(hi_j));
        let di = y[i] * lambda;
        let dj = -y[j] * lambda;
        alpha[i] = (alpha[i] + di).clamp(0.0, c);
        alpha[j] = (alpha[j] + dj).clamp(0.0, c);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * kernel[(t, i)] * di + y[j] * kernel[(t, j)] * dj);
        }
    }
}

fn bias(alpha: &[f64], grad: &[f64], y: &[f64], c: f64, gmax: f64, gmin: f64) -> f64 {
    let free: Vec<f64> = (0..alpha.len()).filter(|&t| alpha[t] > 0.0 && alpha[t] < c).map(|t| y[t] * grad[t]).collect();
    if free.is_empty() {
        // −(m + M)/2 with m, M taken over −yG
        -(gmax.max(-1e300).min(1e300) + gmin.min(1e300).max(-1e300)) / 2.0
    } else {
        free.iter().sum::<f64>() / free.len() as f64
    }
}

impl SvmModel {
    /// Trains on feature columns `x` (`d x N`) with 1-based labels.
    pub fn train(x: &DenseMatrix, labels: &[u32], c: f64, gamma: f64) -> Result<Self, SvmError> {
        if labels.len() != x.cols() || x.cols() == 0 {
            return Err(SvmError::Dimension { expected: x.cols(), got: labels.len() });
        }
        if !(c > 0.0) || !(gamma > 0.0) {
            return Err(SvmError::Config(format!("C = {c}, gamma = {gamma}")));
        }
        let d = x.rows();
        let mean: Vec<f64> = (0..d).map(|i| x.row(i).iter().sum::<f64>() / x.cols() as f64).collect();
        let std: Vec<f64> = (0..d)
            .map(|i| {
                let s = variance(x.row(i).iter().copied()).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        let pts: Vec<Vec<f64>> =
            (0..x.cols()).map(|j| (0..d).map(|i| (x[(i, j)] - mean[i]) / std[i]).collect()).collect();
        let mut classes: Vec<u32> = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() == 1 {
            log::warn!("single class {} in training data, classifier is constant", classes[0]);
        }
        let mut machines = Vec::new();
        for (ia, &ca) in classes.iter().enumerate() {
            for &cb in &classes[ia + 1..] {
                let idx: Vec<usize> = (0..labels.len()).filter(|&t| labels[t] == ca || labels[t] == cb).collect();
                let y: Vec<f64> = idx.iter().map(|&t| if labels[t] == ca { 1.0 } else { -1.0 }).collect();
                let k = DenseMatrix::from_fn(idx.len(), idx.len(), |r, s| rbf(gamma, &pts[idx[r]], &pts[idx[s]]));
                let res = smo(&k, &y, c, KKT_TOL, MAX_ITER)?;
                log::debug!("pair ({ca}, {cb}): {} iterations", res.iterations);
                let sv: Vec<usize> = (0..idx.len()).filter(|&t| res.alpha[t] > 0.0).collect();
                machines.push(BinarySvm {
                    pos: ca,
                    neg: cb,
                    support: sv.iter().map(|&t| pts[idx[t]].clone()).collect(),
                    coef: sv.iter().map(|&t| res.alpha[t] * y[t]).collect(),
                    rho: res.rho,
                });
            }
        }
        Ok(Self { classes, gamma, c, mean, std, machines })
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }

    /// Majority vote; ties go to the lowest class id.
    pub fn predict(&self, x: &[f64]) -> Result<u32, SvmError> {
        if x.len() != self.n_features() {
            return Err(SvmError::Dimension { expected: self.n_features(), got: x.len() });
        }
        if self.classes.len() == 1 {
            return Ok(self.classes[0]);
        }
        let z = self.standardize(x);
        let mut votes = vec![0usize; self.classes.len()];
        for m in &self.machines {
            let winner = if m.decision(self.gamma, &z) > 0.0 { m.pos } else { m.neg };
            votes[self.classes.iter().position(|&c| c == winner).expect("known class")] += 1;
        }
        let best = *votes.iter().max().expect("nonempty");
        Ok(self.classes[votes.iter().position(|&v| v == best).expect("max exists")])
    }

    /// Predicted class of every column.
    pub fn predict_columns(&self, x: &DenseMatrix) -> Result<Vec<u32>, SvmError> {
        (0..x.cols()).map(|j| self.predict(&x.column(j))).collect()
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        let mut s = String::from("mcrom-svm 1\n");
        let _ = writeln!(s, "gamma {:?}\nc {:?}", self.gamma, self.c);
        let _ = writeln!(s, "classes {}", self.classes.iter().map(u32::to_string).collect::<Vec<_>>().join(" "));
        let _ = writeln!(s, "mean {}\nstd {}", join(&self.mean), join(&self.std));
        for m in &self.machines {
            let _ = writeln!(s, "machine {} {} {:?} {}", m.pos, m.neg, m.rho, m.coef.len());
            for (sv, c) in m.support.iter().zip(&m.coef) {
                let _ = writeln!(s, "{c:?} {}", join(sv));
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, SvmError> {
        let bad = |m: &str| SvmError::Format(m.to_string());
        let mut lines = text.lines();
        if lines.next() != Some("mcrom-svm 1") {
            return Err(bad("missing header"));
        }
        let mut field = |key: &str| -> Result<Vec<String>, SvmError> {
            let line = lines.next().ok_or_else(|| bad("truncated"))?;
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(SvmError::Format(format!("expected `{key}`")));
            }
            Ok(it.map(str::to_string).collect())
        };
        let nums = |v: Vec<String>| -> Result<Vec<f64>, SvmError> {
            v.iter().map(|s| s.parse::<f64>().map_err(|_| SvmError::Format(format!("bad number `{s}`")))).collect()
        };
        let gamma = *nums(field("gamma")?)?.first().ok_or_else(|| bad("gamma"))?;
        let c = *nums(field("c")?)?.first().ok_or_else(|| bad("c"))?;
        let classes = field("classes")?
            .iter()
            .map(|s| s.parse::<u32>().map_err(|_| bad("class id")))
            .collect::<Result<Vec<_>, _>>()?;
        let mean = nums(field("mean")?)?;
        let std = nums(field("std")?)?;
        let mut machines = Vec::new();
        while let Some(line) = lines.next() {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 || f[0] != "machine" {
                return Err(bad("expected machine record"));
            }
            let pos = f[1].parse().map_err(|_| bad("class id"))?;
            let neg = f[2].parse().map_err(|_| bad("class id"))?;
            let rho = f[3].parse().map_err(|_| bad("rho"))?;
            let count: usize = f[4].parse().map_err(|_| bad("count"))?;
            let mut support = Vec::with_capacity(count.min(1 << 20));
            let mut coef = Vec::with_capacity(count.min(1 << 20));
            for _ in 0..count {
                let v = nums(
                    lines.next().ok_or_else(|| bad("truncated"))?.split_whitespace().map(str::to_string).collect(),
                )?;
                if v.len() != mean.len() + 1 {
                    return Err(bad("support vector length"));
                }
                coef.push(v[0]);
                support.push(v[1..].to_vec());
            }
            machines.push(BinarySvm { pos, neg, support, coef, rho });
        }
        Ok(Self { classes, gamma, c, mean, std, machines })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SvmError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SvmError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Trains with `γ` from the default rule applied to standardized features.
pub fn svm_train(x: &DenseMatrix, labels: &[u32], c: f64) -> Result<SvmModel, SvmError> {
    let gamma = 1.0 / x.rows() as f64;
    SvmModel::train(x, labels, c, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_formula() {
        // two rows, pooled variance 0.25
        let p = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        assert!((svm_gamma_default(&p, VarianceMode::Pooled).unwrap() - 2.0).abs() < 1e-12);
        let q = DenseMatrix::from_rows(&[vec![-0.5, 0.5, -0.5, 0.5], vec![0.5, -0.5, 0.5, -0.5]]).unwrap();
        let v = variance(q.as_slice().iter().copied());
        assert!((v - 0.25).abs() < 1e-15);
        let mut two = q.clone();
        two.scale(2.0_f64.sqrt());
        assert!((svm_gamma_default(&two, VarianceMode::Pooled).unwrap() - 1.0).abs() < 1e-12);
        let s = svm_gamma_default(&q, VarianceMode::Pooled).unwrap();
        let mut q3 = q.clone();
        q3.scale(3.0);
        assert!((svm_gamma_default(&q3, VarianceMode::Pooled).unwrap() - s / 9.0).abs() < 1e-12);
        assert!(svm_gamma_default(&DenseMatrix::zeros(2, 3), VarianceMode::Pooled).is_err());
    }

    #[test]
    fn xor_is_shattered() {
        let x = DenseMatrix::from_rows(&[vec![0.0, 1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0, 0.0]]).unwrap();
        let y = [1, 1, 2, 2];
        let m = SvmModel::train(&x, &y, 10.0, 1.0).unwrap();
        assert_eq!(m.predict_columns(&x).unwrap(), y);
    }

    #[test]
    fn dual_constraints_hold() {
        let x = DenseMatrix::from_fn(2, 40, |i, j| ((j * 7 + i * 3) % 11) as f64 + if j < 20 { 0.0 } else { 4.0 });
        let y: Vec<f64> = (0..40).map(|j| if j < 20 { 1.0 } else { -1.0 }).collect();
        let k = DenseMatrix::from_fn(40, 40, |a, b| rbf(0.3, &x.column(a), &x.column(b)));
        let r = smo(&k, &y, 1.0, KKT_TOL, MAX_ITER).unwrap();
        assert!(r.alpha.iter().all(|a| (0.0..=1.0).contains(a)));
        assert!(r.alpha.iter().zip(&y).map(|(a, y)| a * y).sum::<f64>().abs() < 1e-8);
        assert!(r.gap < KKT_TOL);
    }

    #[test]
    fn single_class_is_constant() {
        let x = DenseMatrix::from_fn(2, 3, |i, j| (i + j) as f64);
        let m = SvmModel::train(&x, &[4, 4, 4], 1.0, 1.0).unwrap();
        assert_eq!(m.predict(&[100.0, -3.0]).unwrap(), 4);
        assert!(matches!(m.predict(&[1.0]), Err(SvmError::Dimension { .. })));
    }

    #[test]
    fn text_round_trip() {
        let x = DenseMatrix::from_rows(&[vec![0.0, 1.0, 2.0, 3.0, 0.5], vec![1.0, 0.0, 1.0, 3.0, 2.0]]).unwrap();
        let m = SvmModel::train(&x, &[1, 2, 3, 3, 1], 1.0, 0.7).unwrap();
        let back = SvmModel::from_text(&m.to_text()).unwrap();
        assert_eq!(m, back);
        assert!(SvmModel::from_text("nope").is_err());
    }
}
