//! Sparse storage and linear solvers for the elliptic systems.

use crate::error::{check_dim, Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from per-row `(column, value)` lists. Columns within a
    /// row must be strictly increasing.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &rows {
            let mut last = None;
            for &(c, v) in row {
                if c >= n_cols || last.is_some_and(|l| c <= l) {
                    return Err(Error::InvalidArgument(format!("bad column index {c}")));
                }
                last = Some(c);
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { n_rows: rows.len(), n_cols, row_ptr, col_idx, values })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn transpose(&self) -> Self {
        let mut rows = vec![Vec::new(); self.n_cols];
        for i in 0..self.n_rows {
            for (c, v) in self.row(i) {
                rows[c].push((i, v));
            }
        }
        Self::from_rows(self.n_rows, rows).expect("transpose keeps indices sorted")
    }

    /// Largest `|i − j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.n_rows)
            .flat_map(|i| self.row(i).map(move |(c, _)| i.abs_diff(c)))
            .max()
            .unwrap_or(0)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(i) {
                row[c] = v;
            }
        }
        out
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Result of a conjugate-gradient solve.
#[derive(Debug, Clone)]
pub struct CgReport {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// `‖A u − F‖ / ‖F‖` of the returned iterate.
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for SPD `a`.
pub fn conjugate_gradient(a: &CsrMatrix, rhs: &[f64], tol: f64, max_iter: usize) -> Result<CgReport> {
    let n = a.n_rows();
    check_dim(n, rhs.len())?;
    let rhs_norm = norm(rhs);
    if rhs_norm == 0.0 {
        return Ok(CgReport { solution: vec![0.0; n], iterations: 0, relative_residual: 0.0 });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);

    for it in 1..=max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::NotPositiveDefinite { row: it, pivot: pap });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm(&r) <= tol * rhs_norm {
            // recompute the true residual so the contract holds for the returned iterate
            let true_res = norm(&residual(a, &x, rhs)) / rhs_norm;
            if true_res <= tol {
                return Ok(CgReport { solution: x, iterations: it, relative_residual: true_res });
            }
            r = residual(a, &x, rhs);
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
    Err(Error::SolverDiverged { iterations: max_iter, residual: norm(&r) / rhs_norm })
}

/// `F − A u`.
pub fn residual(a: &CsrMatrix, u: &[f64], rhs: &[f64]) -> Vec<f64> {
    a.mul_vec(u).iter().zip(rhs).map(|(au, f)| f - au).collect()
}

/// Solves `A u = F` by preconditioned CG to `‖A u − F‖ ≤ tol ‖F‖`.
pub fn solve_forward(a: &CsrMatrix, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
    let cap = 10 * a.n_rows().max(10);
    conjugate_gradient(a, rhs, tol, cap).map(|r| r.solution)
}

/// Cholesky factor `A = L Lᵀ` of a symmetric banded matrix.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    // row i holds L(i, i-bw ..= i)
    l: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        check_dim(a.n_rows(), a.n_cols())?;
        let n = a.n_rows();
        let bw = a.bandwidth();
        let stride = bw + 1;
        let mut l = vec![0.0; n * stride];
        for i in 0..n {
            for (c, v) in a.row(i) {
                if c <= i {
                    l[i * stride + c + bw - i] = v;
                }
            }
        }
        for i in 0..n {
            let lo_i = i.saturating_sub(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                let ri = i * stride + bw - i;
                let rj = j * stride + bw - j;
                let mut s = l[ri + j];
                for k in lo..j {
                    s -= l[ri + k] * l[rj + k];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite { row: i, pivot: s });
                    }
                    l[ri + i] = s.sqrt();
                } else {
                    l[ri + j] = s / l[rj + j];
                }
            }
        }
        Ok(Self { n, bw, l })
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * (self.bw + 1) + j + self.bw - i]
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` with the stored factor.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n, b.len())?;
        let mut y = b.to_vec();
        for i in 0..self.n {
            let mut s = y[i];
            for k in i.saturating_sub(self.bw)..i {
                s -= self.at(i, k) * y[k];
            }
            y[i] = s / self.at(i, i);
        }
        for i in (0..self.n).rev() {
            let mut s = y[i];
            for k in i + 1..(i + self.bw + 1).min(self.n) {
                s -= self.at(k, i) * y[k];
            }
            y[i] = s / self.at(i, i);
        }
        Ok(y)
    }
}

/// Gaussian elimination with partial pivoting on a dense copy.
pub fn dense_solve(mut a: Vec<Vec<f64>>, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.len();
    check_dim(n, b.len())?;
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty range");
        if a[piv][col] == 0.0 {
            return Err(Error::InvalidArgument("singular matrix".into()));
        }
        a.swap(col, piv);
        x.swap(col, piv);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                for k in col..n {
                    a[row][k] -= factor * a[col][k];
                }
                x[row] -= factor * x[col];
            }
        }
    }
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (x[row] - s) / a[row][row];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize) -> CsrMatrix {
        let rows = (0..n)
            .map(|i| {
                let mut r = Vec::new();
                if i > 0 {
                    r.push((i - 1, -1.0));
                }
                r.push((i, 2.5));
                if i + 1 < n {
                    r.push((i + 1, -1.0));
                }
                r
            })
            .collect();
        CsrMatrix::from_rows(n, rows).unwrap()
    }

    #[test]
    fn solvers_agree_on_tridiagonal_system() {
        let a = tridiag(30);
        let b: Vec<f64> = (0..30).map(|i| (i as f64 * 0.3).sin()).collect();
        let dense = dense_solve(a.to_dense(), &b).unwrap();
        let chol = BandedCholesky::factor(&a).unwrap().solve(&b).unwrap();
        let cg = solve_forward(&a, &b, 1e-12).unwrap();
        for i in 0..30 {
            assert!((dense[i] - chol[i]).abs() < 1e-12);
            assert!((dense[i] - cg[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let a = tridiag(5);
        let r = conjugate_gradient(&a, &[0.0; 5], 1e-10, 10).unwrap();
        assert_eq!(r.solution, vec![0.0; 5]);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn cg_reports_non_convergence() {
        let a = tridiag(50);
        let b = vec![1.0; 50];
        assert!(matches!(conjugate_gradient(&a, &b, 1e-14, 2), Err(Error::SolverDiverged { .. })));
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = CsrMatrix::from_rows(2, vec![vec![(0, 1.0), (1, 2.0)], vec![(0, 2.0), (1, 1.0)]]).unwrap();
        assert!(matches!(BandedCholesky::factor(&a), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn csr_basics() {
        let a = tridiag(4);
        assert_eq!(a.bandwidth(), 1);
        assert_eq!(a.nnz(), 10);
        assert_eq!(a.transpose(), a);
        assert_eq!(a.get(0, 3), 0.0);
        assert_eq!(a.mul_vec(&[1.0; 4]), vec![1.5, 0.5, 0.5, 1.5]);
        assert!(CsrMatrix::from_rows(2, vec![vec![(1, 1.0), (0, 1.0)]]).is_err());
    }
}
