//! Thin singular value decomposition.
//!
//! The thinner side of the input is treated as the column count of a tall
//! matrix `A`. `A` is first reduced by Householder QR to its square triangular
//! factor `R`, and one-sided (Hestenes) Jacobi rotations then orthogonalize the
//! columns of `R`. Orthogonality of the computed singular vectors is relative
//! per column pair, so it does not degrade for small singular values.

use super::dense::dot;
use super::{DenseMatrix, LinalgError};

/// Relative cutoff below which singular values are treated as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

const MAX_SWEEPS: usize = 80;

#[derive(Clone, Debug)]
pub struct SvdResult {
    /// Left singular vectors, one per column.
    pub u: DenseMatrix,
    /// Singular values, descending and strictly positive.
    pub sigma: Vec<f64>,
    /// Right singular vectors, one per row.
    pub vt: DenseMatrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `u · diag(sigma) · vt`, optionally truncated to the leading `k` triplets.
    pub fn reconstruct(&self, k: Option<usize>) -> DenseMatrix {
        let k = k.unwrap_or(self.rank()).min(self.rank());
        let mut us = self.u.leading_columns(k);
        for i in 0..us.rows() {
            for (j, v) in us.row_mut(i).iter_mut().enumerate() {
                *v *= self.sigma[j];
            }
        }
        let idx: Vec<usize> = (0..k).collect();
        let vt = self.vt.transpose().select_columns(&idx).transpose();
        us.matmul(&vt).expect("shapes agree by construction")
    }
}

/// Computes the thin SVD of `m`, dropping singular values below `rank_tol * sigma[0]`.
pub fn thin_svd(m: &DenseMatrix, rank_tol: f64) -> Result<SvdResult, LinalgError> {
    if m.is_empty() {
        return Err(LinalgError::Dimension(format!("SVD of an empty {}x{} matrix", m.rows(), m.cols())));
    }
    if !m.is_finite() {
        return Err(LinalgError::NonFinite("matrix passed to SVD".into()));
    }
    if !(rank_tol >= 0.0) {
        return Err(LinalgError::Input("rank tolerance must be nonnegative".into()));
    }
    let transposed = m.rows() < m.cols();
    let (p, q) = if transposed { (m.cols(), m.rows()) } else { (m.rows(), m.cols()) };

    // Column-major copy of the tall matrix A (p x q).
    let mut a = vec![0.0; p * q];
    for i in 0..m.rows() {
        for (j, &v) in m.row(i).iter().enumerate() {
            if transposed {
                a[i * p + j] = v;
            } else {
                a[j * p + i] = v;
            }
        }
    }

    let reflectors = householder_qr(&mut a, p, q);
    // R as column-major q x q.
    let mut w = vec![0.0; q * q];
    for j in 0..q {
        for i in 0..=j {
            w[j * q + i] = a[j * p + i];
        }
    }
    let mut v = vec![0.0; q * q];
    for j in 0..q {
        v[j * q + j] = 1.0;
    }
    one_sided_jacobi(&mut w, &mut v, q)?;

    let norms: Vec<f64> = (0..q).map(|j| dot(&w[j * q..(j + 1) * q], &w[j * q..(j + 1) * q]).sqrt()).collect();
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));
    let smax = norms[order[0]];
    let keep: Vec<usize> = order.into_iter().take_while(|&j| norms[j] > 0.0 && norms[j] > rank_tol * smax).collect();
    if keep.is_empty() {
        return Err(LinalgError::Input("matrix is numerically zero".into()));
    }
    let r = keep.len();
    let sigma: Vec<f64> = keep.iter().map(|&j| norms[j]).collect();

    // Left vectors of A: Q * [w_j / sigma_j ; 0].
    let mut ua = DenseMatrix::zeros(p, r);
    let mut col = vec![0.0; p];
    for (k, &j) in keep.iter().enumerate() {
        col.iter_mut().for_each(|c| *c = 0.0);
        for i in 0..q {
            col[i] = w[j * q + i] / sigma[k];
        }
        apply_q(&reflectors, &mut col);
        ua.set_column(k, &col);
    }
    // Right vectors of A.
    let mut va = DenseMatrix::zeros(q, r);
    for (k, &j) in keep.iter().enumerate() {
        va.set_column(k, &v[j * q..(j + 1) * q]);
    }

    let (u, vt) = if transposed { (va, ua.transpose()) } else { (ua, va.transpose()) };
    Ok(SvdResult { u, sigma, vt })
}

/// In-place Householder QR of a column-major `p x q` matrix. On return the
/// upper triangle holds `R`; the unit reflectors are returned separately.
fn householder_qr(a: &mut [f64], p: usize, q: usize) -> Vec<Vec<f64>> {
    let mut reflectors = Vec::with_capacity(q);
    for k in 0..q {
        let x = &a[k * p + k..(k + 1) * p];
        let norm_x = dot(x, x).sqrt();
        if norm_x == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm_x } else { norm_x };
        let mut vk = x.to_vec();
        vk[0] -= alpha;
        let vnorm = dot(&vk, &vk).sqrt();
        if vnorm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        vk.iter_mut().for_each(|e| *e /= vnorm);
        for j in k + 1..q {
            let col = &mut a[j * p + k..(j + 1) * p];
            let s = 2.0 * dot(&vk, col);
            if s != 0.0 {
                col.iter_mut().zip(&vk).for_each(|(c, vi)| *c -= s * vi);
            }
        }
        let col = &mut a[k * p + k..(k + 1) * p];
        col[0] = alpha;
        col[1..].iter_mut().for_each(|c| *c = 0.0);
        reflectors.push(vk);
    }
    reflectors
}

fn apply_q(reflectors: &[Vec<f64>], y: &mut [f64]) {
    for (k, vk) in reflectors.iter().enumerate().rev() {
        if vk.is_empty() {
            continue;
        }
        let seg = &mut y[k..];
        let s = 2.0 * dot(vk, seg);
        if s != 0.0 {
            seg.iter_mut().zip(vk).for_each(|(c, vi)| *c -= s * vi);
        }
    }
}

/// Cyclic one-sided Jacobi on the columns of `w` (column-major `n x n`),
/// accumulating the rotations into `v`.
fn one_sided_jacobi(w: &mut [f64], v: &mut [f64], n: usize) -> Result<(), LinalgError> {
    let tol = f64::EPSILON * (n as f64).sqrt().max(1.0);
    let mut sq: Vec<f64> = (0..n).map(|j| dot(&w[j * n..(j + 1) * n], &w[j * n..(j + 1) * n])).collect();
    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let (alpha, beta) = (sq[i], sq[j]);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let (wi, wj) = pair_mut(w, n, i, j);
                let gamma = dot(wi, wj);
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(wi, wj, c, s);
                // exact update of the squared norms keeps the sweep cheap
                sq[i] = alpha - t * gamma;
                sq[j] = beta + t * gamma;
                let (vi, vj) = pair_mut(v, n, i, j);
                rotate(vi, vj, c, s);
            }
        }
        // refresh norms to limit drift
        for j in 0..n {
            sq[j] = dot(&w[j * n..(j + 1) * n], &w[j * n..(j + 1) * n]);
        }
        if !rotated {
            return Ok(());
        }
    }
    Err(LinalgError::IterationLimit { iterations: MAX_SWEEPS, residual: f64::NAN })
}

#[inline]
fn pair_mut(buf: &mut [f64], n: usize, i: usize, j: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(i < j);
    let (lo, hi) = buf.split_at_mut(j * n);
    (&mut lo[i * n..(i + 1) * n], &mut hi[..n])
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}
