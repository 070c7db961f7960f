//! Perron root of nonnegative operators by power iteration.

use nalgebra::DMatrix;

use crate::error::{EpiError, Result};

/// Anything that can compute `y = A x`.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.nrows();
        y.iter_mut().for_each(|v| *v = 0.0);
        // column-major storage: accumulate column by column
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            let col = &self.as_slice()[j * n..(j + 1) * n];
            for (yi, &a) in y.iter_mut().zip(col) {
                *yi += a * xj;
            }
        }
    }
}

/// Compressed sparse row matrix, enough for matrix-vector products.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Duplicate `(row, col)` entries are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.retain(|t| t.2 != 0.0);
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < n && c < n, "triplet ({r}, {c}) outside {n}x{n}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        self.col_idx[range.clone()]
            .binary_search(&col)
            .map_or(0.0, |k| self.values[range.start + k])
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.col_idx[k])] += self.values[k];
            }
        }
        m
    }

    /// `y = A^T x`.
    pub fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.col_idx[k]] += self.values[k] * xr;
            }
        }
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yr = acc;
        }
    }
}

#[derive(Clone, Debug)]
pub struct PowerIterationOptions {
    /// Required bound on `|A u - lambda u|_1` for a unit 1-norm `u`, relative
    /// to `max(1, lambda)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Iterations without convergence before restarting with a shift.
    pub restart_after: usize,
}

impl Default for PowerIterationOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            restart_after: 1_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PerronPair {
    pub lambda: f64,
    /// Nonnegative, unit 1-norm.
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Power iteration from the all-ones vector. Iterates until the residual is
/// far below `tol` (or the cap is hit, in which case `tol` itself must hold).
/// If plain iteration stagnates, which happens for periodic matrices, it is
/// restarted from the current iterate on `A + sigma I`, whose Perron root is
/// strictly dominant.
pub fn perron_root<A: LinearOperator + ?Sized>(
    op: &A,
    opts: &PowerIterationOptions,
) -> Result<PerronPair> {
    let n = op.dim();
    if n == 0 {
        return Ok(PerronPair {
            lambda: 0.0,
            vector: Vec::new(),
            iterations: 0,
            residual: 0.0,
        });
    }
    let target = opts.tol * 1e-3;
    let mut v = vec![1.0 / n as f64; n];
    let mut w = vec![0.0; n];
    let mut shift = 0.0;
    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    let mut iterations = 0;

    for it in 1..=opts.max_iter {
        iterations = it;
        op.apply(&v, &mut w);
        if shift != 0.0 {
            for (wi, vi) in w.iter_mut().zip(&v) {
                *wi += shift * vi;
            }
        }
        let norm: f64 = w.iter().map(|x| x.abs()).sum();
        if norm == 0.0 || !norm.is_finite() {
            if norm == 0.0 {
                // A v = 0 with v >= 0 nonzero: eigenvalue 0
                return Ok(PerronPair {
                    lambda: 0.0,
                    vector: v,
                    iterations: it,
                    residual: 0.0,
                });
            }
            return Err(EpiError::Overflow("power iteration diverged".into()));
        }
        lambda = norm - shift;
        residual = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - norm * vi).abs())
            .sum::<f64>();
        let scale = lambda.abs().max(1.0);
        if best.as_ref().is_none_or(|b| residual < b.1) {
            best = Some((lambda, residual, v.clone()));
        }
        if residual <= target * scale {
            break;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
        if shift == 0.0 && it == opts.restart_after && residual > opts.tol * scale {
            shift = lambda.max(1e-3);
        }
    }

    let (lambda, residual, v) = match best {
        Some(b) if b.1 < residual => b,
        _ => (lambda, residual, v),
    };
    if residual > opts.tol * lambda.abs().max(1.0) {
        return Err(EpiError::NonConvergence {
            iterations: opts.max_iter,
            residual,
            estimate: lambda,
        });
    }
    let total: f64 = v.iter().sum();
    let vector = v.iter().map(|x| (x / total).max(0.0)).collect();
    Ok(PerronPair {
        lambda: lambda.max(0.0),
        vector,
        iterations,
        residual,
    })
}

/// Spectral radius from the full complex spectrum (real Schur form). Slow;
/// meant as a fallback for small matrices.
pub fn dense_spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rho(m: DMatrix<f64>) -> PerronPair {
        perron_root(&m, &PowerIterationOptions::default()).unwrap()
    }

    #[test]
    fn identity_and_zero() {
        let p = rho(DMatrix::identity(4, 4));
        assert!((p.lambda - 1.0).abs() < 1e-14);
        assert_eq!(rho(DMatrix::zeros(3, 3)).lambda, 0.0);
    }

    #[test]
    fn two_by_two() {
        let p = rho(DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0]));
        assert!((p.lambda - 2.0).abs() < 1e-12);
    }

    #[test]
    fn periodic_matrix_needs_restart() {
        // 3-cycle with unequal weights: spectrum on a circle of radius (2*3*0.5)^(1/3)
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.5, 2.0, 0.0, 0.0, 0.0, 3.0, 0.0]);
        let p = rho(m.clone());
        let expected = 3f64.cbrt();
        assert!((p.lambda - expected).abs() < 1e-9, "{}", p.lambda);
        let mut mu = vec![0.0; 3];
        m.apply(&p.vector, &mut mu);
        let res: f64 = mu.iter().zip(&p.vector).map(|(a, b)| (a - p.lambda * b).abs()).sum();
        assert!(res < 1e-9);
    }

    #[test]
    fn nilpotent_chain() {
        let mut m = DMatrix::zeros(5, 5);
        for i in 0..4 {
            m[(i + 1, i)] = 1.0;
        }
        assert_eq!(rho(m).lambda, 0.0);
    }

    #[test]
    fn csr_matches_dense() {
        let trips = vec![(0, 1, 2.0), (1, 0, 1.0), (1, 0, 0.5), (2, 2, 3.0)];
        let csr = CsrMatrix::from_triplets(3, trips);
        let dense = csr.to_dense();
        assert_eq!(dense[(1, 0)], 1.5);
        assert_eq!(csr.get(1, 0), 1.5);
        assert_eq!(csr.get(0, 0), 0.0);
        let x = [1.0, 2.0, 3.0];
        let (mut a, mut b) = ([0.0; 3], [0.0; 3]);
        csr.apply(&x, &mut a);
        dense.apply(&x, &mut b);
        assert_eq!(a, b);
        csr.apply_transpose(&x, &mut a);
        dense.transpose().apply(&x, &mut b);
        assert_eq!(a, b);
    }
}
