//! Compressed sparse row storage for the few operators applied per time step.

use num_complex::Complex64 as C64;

use crate::spin::CMatrix;

#[derive(Clone, Debug)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl CsrMatrix {
    /// Keeps entries with modulus above `drop_tol`.
    pub fn from_dense(m: &CMatrix, drop_tol: f64) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "CsrMatrix requires a square matrix");
        let n = m.nrows();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            for j in 0..n {
                let v = m[(i, j)];
                if v.norm() > drop_tol {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `out = self · x`.
    pub fn apply(&self, x: &[C64], out: &mut [C64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(out.len(), self.n);
        for (i, o) in out.iter_mut().enumerate() {
            let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut acc = C64::new(0.0, 0.0);
            for k in lo..hi {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *o = acc;
        }
    }

    /// Upper bound on the operator 2-norm: `sqrt(‖A‖₁ ‖A‖∞)`.
    pub fn norm_bound(&self) -> f64 {
        let mut col_sums = vec![0.0; self.n];
        let mut max_row: f64 = 0.0;
        for i in 0..self.n {
            let mut row = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let a = self.vals[k].norm();
                row += a;
                col_sums[self.cols[k]] += a;
            }
            max_row = max_row.max(row);
        }
        let max_col = col_sums.into_iter().fold(0.0, f64::max);
        (max_row * max_col).sqrt()
    }

    /// `self · m` for a dense square `m`.
    pub fn mul_dense(&self, m: &CMatrix) -> CMatrix {
        assert_eq!(m.nrows(), self.n);
        let mut out = CMatrix::zeros(self.n, m.ncols());
        for j in 0..m.ncols() {
            let x = &m.as_slice()[j * self.n..(j + 1) * self.n];
            let y = &mut out.as_mut_slice()[j * self.n..(j + 1) * self.n];
            self.apply(x, y);
        }
        out
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.cols[k])] = self.vals[k];
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_dense_product() {
        let mut m = CMatrix::zeros(4, 4);
        m[(0, 1)] = C64::new(1.0, 2.0);
        m[(2, 3)] = C64::new(-0.5, 0.0);
        m[(3, 0)] = C64::new(0.0, 1.0);
        m[(1, 1)] = C64::new(3.0, 0.0);
        let csr = CsrMatrix::from_dense(&m, 0.0);
        assert_eq!(csr.nnz(), 4);
        let x: Vec<C64> = (0..4).map(|k| C64::new(k as f64, 1.0 - k as f64)).collect();
        let mut y = vec![C64::new(0.0, 0.0); 4];
        csr.apply(&x, &mut y);
        let dense = &m * nalgebra::DVector::from_vec(x);
        for i in 0..4 {
            assert!((y[i] - dense[i]).norm() < 1e-15);
        }
        assert!(csr.norm_bound() >= m.norm() / 2.0);
        assert_eq!(csr.to_dense(), m);
        let rhs = CMatrix::from_fn(4, 3, |i, j| C64::new(i as f64 - j as f64, 0.5 * j as f64));
        assert!((csr.mul_dense(&rhs) - &m * &rhs).norm() < 1e-14);
    }
}
