use super::{DenseMatrix, LinalgError};

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Assembles from `(row, col, value)` triplets. Duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self, LinalgError> {
        let mut counts = vec![0usize; rows + 1];
        for &(i, j, _) in triplets {
            if i >= rows || j >= cols {
                return Err(LinalgError::Dimension(format!("entry ({i},{j}) outside a {rows}x{cols} matrix")));
            }
            counts[i + 1] += 1;
        }
        for i in 0..rows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols_tmp = vec![0usize; triplets.len()];
        let mut vals_tmp = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            let at = next[i];
            cols_tmp[at] = j;
            vals_tmp[at] = v;
            next[i] += 1;
        }

        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..rows {
            scratch.clear();
            scratch.extend((counts[i]..counts[i + 1]).map(|k| (cols_tmp[k], vals_tmp[k])));
            scratch.sort_by_key(|e| e.0);
            for &(j, v) in &scratch {
                if col_idx.len() > row_ptr[i] && *col_idx.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { rows, cols, row_ptr, col_idx, values })
    }

    pub fn identity(n: usize) -> Self {
        Self { rows: n, cols: n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: vec![1.0; n] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row `i` as `(column indices, values)`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "sparse matvec: length mismatch");
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, v)| v * x[j]).sum();
        }
    }

    /// Linear combination `Σ coeffs[q] * mats[q]` over matrices with any patterns.
    pub fn linear_combination(coeffs: &[f64], mats: &[&SparseMatrix]) -> Result<Self, LinalgError> {
        let first = mats.first().ok_or_else(|| LinalgError::Dimension("no matrices".into()))?;
        if coeffs.len() != mats.len() {
            return Err(LinalgError::Dimension("coefficient count mismatch".into()));
        }
        let mut trip = Vec::new();
        for (c, m) in coeffs.iter().zip(mats) {
            if m.shape() != first.shape() {
                return Err(LinalgError::Dimension("operand shapes differ".into()));
            }
            for i in 0..m.rows {
                let (cols, vals) = m.row(i);
                trip.extend(cols.iter().zip(vals).map(|(&j, v)| (i, j, c * v)));
            }
        }
        Self::from_triplets(first.rows, first.cols, &trip)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Principal submatrix on the given (sorted) index set.
    pub fn submatrix(&self, keep: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.cols];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut trip = Vec::new();
        for (new_i, &old_i) in keep.iter().enumerate() {
            let (cols, vals) = self.row(old_i);
            for (&j, &v) in cols.iter().zip(vals) {
                if map[j] != usize::MAX {
                    trip.push((new_i, map[j], v));
                }
            }
        }
        Self::from_triplets(keep.len(), keep.len(), &trip).expect("indices are in range")
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d[(i, j)] = v;
            }
        }
        d
    }

    /// `Vᵀ A V` for a dense `V` with as many rows as `A`.
    pub fn project(&self, v: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        self.petrov_project(v, v)
    }

    /// `Wᵀ A V`.
    pub fn petrov_project(&self, w: &DenseMatrix, v: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        if v.rows() != self.cols || w.rows() != self.rows {
            return Err(LinalgError::Dimension(format!(
                "cannot project a {}x{} operator with bases of {} and {} rows",
                self.rows,
                self.cols,
                w.rows(),
                v.rows()
            )));
        }
        let n = v.cols();
        let mut av = DenseMatrix::zeros(self.rows, n);
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            let out = av.row_mut(i);
            for (&j, &a) in cols.iter().zip(vals) {
                for (o, vj) in out.iter_mut().zip(v.row(j)) {
                    *o += a * vj;
                }
            }
        }
        w.tr_matmul(&av)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).all(|(&j, &v)| (v - self.get(j, i)).abs() <= tol)
            })
    }
}
