//! Sparse matrices, direct factorizations (backed by `faer`) and conjugate gradients.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{MatMut, Side};

use crate::{Error, Result};

/// Compressed sparse row matrix with duplicate entries summed.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_triplets(n_rows: usize, n_cols: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = entries.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &sorted {
            assert!(r < n_rows && c < n_cols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
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

    /// `y = A x`
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for r in 0..self.n_rows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec(x, &mut y);
        y
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        (self.row_ptr[r]..self.row_ptr[r + 1])
            .find(|&k| self.col_idx[k] == c)
            .map_or(0.0, |k| self.values[k])
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                trip.push((self.col_idx[k], r, self.values[k]));
            }
        }
        CsrMatrix::from_triplets(self.n_cols, self.n_rows, &trip)
    }

    /// Largest `|A_rc - A_cr|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                worst = worst.max((self.values[k] - self.get(c, r)).abs());
            }
        }
        worst
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                trip.push(Triplet::new(r, self.col_idx[k], self.values[k]));
            }
        }
        SparseColMat::try_new_from_triplets(self.n_rows, self.n_cols, &trip)
            .map_err(|e| Error::Singular(format!("sparse assembly failed: {e:?}")))
    }
}

/// Sparse Cholesky factorization of an SPD matrix.
pub struct CholeskySolver {
    n: usize,
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
}

impl CholeskySolver {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.n_rows();
        let llt = a
            .to_faer()?
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::Singular(format!("Cholesky factorization failed: {e:?}")))?;
        Ok(CholeskySolver { n, llt })
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        if self.n == 0 {
            return;
        }
        self.llt
            .solve_in_place(MatMut::from_column_major_slice_mut(rhs, self.n, 1));
    }
}

/// Sparse LU factorization of a general square matrix.
pub struct LuSolver {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl LuSolver {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.n_rows();
        let lu = a
            .to_faer()?
            .sp_lu()
            .map_err(|e| Error::Singular(format!("LU factorization failed: {e:?}")))?;
        Ok(LuSolver { n, lu })
    }

    /// Solves and checks the residual, since a numerically singular LU does
    /// not always fail at factorization time.
    pub fn solve_checked(&self, a: &CsrMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut x = rhs.to_vec();
        if self.n > 0 {
            self.lu
                .solve_in_place(MatMut::from_column_major_slice_mut(&mut x, self.n, 1));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("LU solve produced non-finite values".into()));
        }
        let ax = a.mul(&x);
        let res = norm(&ax.iter().zip(rhs).map(|(p, q)| p - q).collect::<Vec<_>>());
        let scale = norm(rhs).max(norm(&ax)).max(f64::MIN_POSITIVE);
        if res > 1e-8 * scale {
            return Err(Error::Singular(format!(
                "LU residual {res:.3e} too large (rhs norm {scale:.3e})"
            )));
        }
        Ok(x)
    }
}

/// Dense LU solve with partial pivoting.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mat = faer::Mat::from_fn(n, n, |r, c| a[r][c]);
    let lu = mat.partial_piv_lu();
    let mut x = b.to_vec();
    lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, n, 1));
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("dense LU solve produced non-finite values".into()));
    }
    Ok(x)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// `y += alpha x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Removes the mean of `v` over the entries flagged in `active`, leaving the rest untouched.
pub fn remove_mean(v: &mut [f64], active: &[bool]) {
    let (sum, count) = v
        .iter()
        .zip(active)
        .filter(|(_, &a)| a)
        .fold((0.0, 0usize), |(s, c), (x, _)| (s + x, c + 1));
    if count == 0 {
        return;
    }
    let mean = sum / count as f64;
    for (x, &a) in v.iter_mut().zip(active) {
        if a {
            *x -= mean;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Conjugate gradients for a symmetric positive (semi)definite operator.
///
/// `project` maps onto the complement of the operator's null space and is
/// applied to the right-hand side, every residual and the final iterate.
/// Stops when the Euclidean residual norm is at most `tol_abs`.
pub fn conjugate_gradient<A, P>(
    mut apply: A,
    project: P,
    b: &[f64],
    x: &mut [f64],
    tol_abs: f64,
    max_iter: usize,
) -> CgOutcome
where
    A: FnMut(&[f64], &mut [f64]),
    P: Fn(&mut [f64]),
{
    let n = b.len();
    let mut ax = vec![0.0; n];
    project(x);
    apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    project(&mut r);
    let mut rr = dot(&r, &r);
    if rr.sqrt() <= tol_abs {
        return CgOutcome {
            iterations: 0,
            residual: rr.sqrt(),
            converged: true,
        };
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return CgOutcome {
                iterations: it,
                residual: rr.sqrt(),
                converged: false,
            };
        }
        let alpha = rr / pap;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        project(&mut r);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tol_abs {
            project(x);
            return CgOutcome {
                iterations: it,
                residual: rr_new.sqrt(),
                converged: true,
            };
        }
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    project(x);
    CgOutcome {
        iterations: max_iter,
        residual: rr.sqrt(),
        converged: false,
    }
}

/// Eigenvalues (ascending) of the symmetric part of a 2x2 matrix.
pub fn sym_eigenvalues(m: [[f64; 2]; 2]) -> [f64; 2] {
    let a = m[0][0];
    let d = m[1][1];
    let b = 0.5 * (m[0][1] + m[1][0]);
    let mean = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    [mean - rad, mean + rad]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
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
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn duplicates_are_summed() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, -1.0)]);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(1, 0), -1.0);
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn cholesky_and_cg_agree() {
        let a = laplacian_1d(50);
        let b: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut x1 = b.clone();
        CholeskySolver::new(&a).unwrap().solve_in_place(&mut x1);
        let mut x2 = vec![0.0; 50];
        let out = conjugate_gradient(|v, o| a.matvec(v, o), |_| {}, &b, &mut x2, 1e-13, 500);
        assert!(out.converged);
        for (p, q) in x1.iter().zip(&x2) {
            assert!((p - q).abs() < 1e-10);
        }
        let lu = LuSolver::new(&a).unwrap().solve_checked(&a, &b).unwrap();
        assert!(lu.iter().zip(&x1).all(|(p, q)| (p - q).abs() < 1e-10));
    }

    #[test]
    fn cg_with_projection_solves_singular_neumann() {
        // periodic 1D Laplacian, null space = constants
        let n = 40;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            t.push((i, (i + 1) % n, -1.0));
            t.push((i, (i + n - 1) % n, -1.0));
        }
        let a = CsrMatrix::from_triplets(n, n, &t);
        let active = vec![true; n];
        let mut b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        remove_mean(&mut b, &active);
        let mut x = vec![1.0; n];
        let out = conjugate_gradient(
            |v, o| a.matvec(v, o),
            |v| remove_mean(v, &active),
            &b,
            &mut x,
            1e-12,
            1000,
        );
        assert!(out.converged);
        assert!(x.iter().sum::<f64>().abs() < 1e-10);
        let r = a.mul(&x);
        assert!(r.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-10));
    }

    #[test]
    fn singular_lu_is_reported() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        let res = LuSolver::new(&a).and_then(|lu| lu.solve_checked(&a, &[1.0, 0.0]));
        assert!(res.is_err());
    }

    #[test]
    fn dense_solve_small_system() {
        let a = vec![vec![0.0, 2.0], vec![1.0, 1.0]];
        let x = dense_solve(&a, &[2.0, 3.0]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn symmetric_part_eigenvalues() {
        let ev = sym_eigenvalues([[2.0, 1.0], [1.0, 2.0]]);
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
        let ev = sym_eigenvalues([[1.0, 4.0], [-4.0, 1.0]]);
        assert_eq!(ev, [1.0, 1.0]);
    }
}
