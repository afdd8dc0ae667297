use super::dense::{dot, norm2};
use super::{DenseMatrix, LinalgError, SparseMatrix};

/// LU factorization with partial pivoting, `P A = L U`, stored compactly.
#[derive(Clone, Debug)]
pub struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl LuFactors {
    pub fn new(a: &DenseMatrix) -> Result<Self, LinalgError> {
        let n = a.rows();
        if n == 0 || a.cols() != n {
            return Err(LinalgError::Dimension(format!(
                "LU needs a nonempty square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        if !a.is_finite() {
            return Err(LinalgError::NonFinite("matrix passed to LU".into()));
        }
        let scale = a.max_abs();
        let tiny = scale * f64::EPSILON * n as f64;
        let mut lu = a.as_slice().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (mut p, mut best) = (k, lu[k * n + k].abs());
            for i in k + 1..n {
                let v = lu[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= tiny || best == 0.0 {
                return Err(LinalgError::Singular { pivot: k });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                if f != 0.0 {
                    let (upper, lower) = lu.split_at_mut(i * n);
                    let src = &upper[k * n + k + 1..k * n + n];
                    for (d, s) in lower[k + 1..n].iter_mut().zip(src) {
                        *d -= f * s;
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let n = self.n;
        if b.len() != n {
            return Err(LinalgError::Dimension(format!("right-hand side of length {} for a {n}x{n} system", b.len())));
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            x[i] -= dot(row, &x[..i]);
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n + i + 1..(i + 1) * n];
            x[i] = (x[i] - dot(row, &x[i + 1..])) / self.lu[i * n + i];
        }
        Ok(x)
    }
}

/// Solves `a x = b` by LU with partial pivoting.
pub fn dense_solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if b.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite("right-hand side".into()));
    }
    LuFactors::new(a)?.solve(b)
}

/// Solves a general tridiagonal system by banded Gaussian elimination with
/// partial pivoting. `lower[i]` couples row `i+1` to column `i`, `upper[i]`
/// couples row `i` to column `i+1`.
pub fn tridiagonal_solve(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = diag.len();
    if n == 0 || lower.len() + 1 != n || upper.len() + 1 != n || rhs.len() != n {
        return Err(LinalgError::Dimension("inconsistent tridiagonal bands".into()));
    }
    // Rows carry up to two super-diagonals after pivoting.
    let mut d = diag.to_vec();
    let mut u1: Vec<f64> = upper.iter().copied().chain(std::iter::once(0.0)).collect();
    let mut u2 = vec![0.0; n];
    let mut l = lower.to_vec();
    let mut b = rhs.to_vec();
    let scale = diag.iter().chain(lower).chain(upper).fold(0.0_f64, |m, v| m.max(v.abs()));
    let tiny = scale * f64::EPSILON * n as f64;
    for k in 0..n - 1 {
        if l[k].abs() > d[k].abs() {
            // row k holds columns (k, k+1, k+2) = (d, u1, u2); row k+1 holds (l, d, u1)
            let top = (d[k], u1[k], u2[k]);
            let bottom = (l[k], d[k + 1], u1[k + 1]);
            (d[k], u1[k], u2[k]) = bottom;
            (l[k], d[k + 1], u1[k + 1]) = top;
            b.swap(k, k + 1);
        }
        if d[k].abs() <= tiny || d[k] == 0.0 {
            return Err(LinalgError::Singular { pivot: k });
        }
        let f = l[k] / d[k];
        d[k + 1] -= f * u1[k];
        u1[k + 1] -= f * u2[k];
        b[k + 1] -= f * b[k];
    }
    if d[n - 1].abs() <= tiny || d[n - 1] == 0.0 {
        return Err(LinalgError::Singular { pivot: n - 1 });
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        if i + 1 < n {
            s -= u1[i] * x[i + 1];
        }
        if i + 2 < n {
            s -= u2[i] * x[i + 2];
        }
        x[i] = s / d[i];
    }
    Ok(x)
}

/// Result of a conjugate-gradient solve.
#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive definite `a`.
pub fn sparse_cg_solve(a: &SparseMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<CgOutcome, LinalgError> {
    sparse_cg_solve_from(a, b, None, tol, max_iter)
}

/// Same as [`sparse_cg_solve`] with an optional starting guess.
pub fn sparse_cg_solve_from(
    a: &SparseMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome, LinalgError> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(LinalgError::Dimension(format!(
            "CG on a {}x{} matrix with a right-hand side of length {}",
            a.rows(),
            a.cols(),
            b.len()
        )));
    }
    if !(tol > 0.0) {
        return Err(LinalgError::Input("CG tolerance must be positive".into()));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite("right-hand side".into()));
    }
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(CgOutcome { x: vec![0.0; n], iterations: 0, relative_residual: 0.0 });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            if d > 0.0 {
                Ok(1.0 / d)
            } else {
                Err(LinalgError::Input(format!("nonpositive diagonal entry {d:e} at row {i}; matrix is not SPD")))
            }
        })
        .collect::<Result<_, _>>()?;

    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = b.to_vec();
    if x0.is_some() {
        let ax = a.matvec(&x);
        r.iter_mut().zip(&ax).for_each(|(ri, ai)| *ri -= ai);
    }
    let mut rel = norm2(&r) / bnorm;
    if rel <= tol {
        return Ok(CgOutcome { x, iterations: 0, relative_residual: rel });
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        a.matvec_into(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(LinalgError::Input(format!(
                "nonpositive curvature {curvature:e} at CG iteration {it}; matrix is not SPD"
            )));
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = norm2(&r) / bnorm;
        if rel <= tol {
            return Ok(CgOutcome { x, iterations: it, relative_residual: rel });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(LinalgError::IterationLimit { iterations: max_iter, residual: rel })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        SparseMatrix::from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn identity_solve_returns_rhs() {
        let b = [0.3, -2.0, 7.5];
        assert_eq!(dense_solve(&DenseMatrix::identity(3), &b).unwrap(), b.to_vec());
        let out = sparse_cg_solve(&SparseMatrix::identity(3), &[1.0, 2.0, 3.0], 1e-12, 10).unwrap();
        assert_eq!(out.x, vec![1.0, 2.0, 3.0]);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn diagonal_solve() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap();
        assert_eq!(dense_solve(&a, &[2.0, 8.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn singular_matrix_names_pivot() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        match dense_solve(&a, &[1.0, 1.0]) {
            Err(LinalgError::Singular { pivot }) => assert_eq!(pivot, 1),
            other => panic!("expected singularity, got {other:?}"),
        }
    }

    #[test]
    fn cg_matches_lu_on_laplacian() {
        let n = 50;
        let a = laplacian(n);
        let b = vec![1.0; n];
        let cg = sparse_cg_solve(&a, &b, 1e-13, 500).unwrap();
        let lu = dense_solve(&a.to_dense(), &b).unwrap();
        let diff = cg.x.iter().zip(&lu).fold(0.0_f64, |m, (p, q)| m.max((p - q).abs()));
        assert!(diff < 1e-8, "max difference {diff}");
    }

    #[test]
    fn cg_reports_iteration_limit_and_indefiniteness() {
        let a = laplacian(40);
        match sparse_cg_solve(&a, &vec![1.0; 40], 1e-14, 3) {
            Err(LinalgError::IterationLimit { iterations, residual }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-14);
            }
            other => panic!("expected iteration limit, got {other:?}"),
        }
        let indefinite =
            SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 3.0), (1, 0, 3.0), (1, 1, 1.0)]).unwrap();
        assert!(matches!(sparse_cg_solve(&indefinite, &[1.0, -1.0], 1e-10, 10), Err(LinalgError::Input(_))));
    }

    #[test]
    fn tridiagonal_with_pivoting_matches_lu() {
        let n = 12;
        let lower: Vec<f64> = (0..n - 1).map(|i| 3.0 + i as f64).collect();
        let diag: Vec<f64> = (0..n).map(|i| 0.1 * (i as f64 - 4.0)).collect();
        let upper: Vec<f64> = (0..n - 1).map(|i| -1.0 + 0.3 * i as f64).collect();
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let dense = DenseMatrix::from_fn(n, n, |i, j| {
            if i == j {
                diag[i]
            } else if i == j + 1 {
                lower[j]
            } else if j == i + 1 {
                upper[i]
            } else {
                0.0
            }
        });
        let x = tridiagonal_solve(&lower, &diag, &upper, &rhs).unwrap();
        let reference = dense_solve(&dense, &rhs).unwrap();
        for (a, b) in x.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}
