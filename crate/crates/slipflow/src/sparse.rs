//! Minimal sparse-matrix plumbing: triplet accumulation, CSR storage, and
//! the bridge to faer's sparse direct solvers.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Side;

use crate::error::SolverError;

/// Triplet accumulator; duplicate entries are summed on conversion.
#[derive(Debug, Clone)]
pub struct CooMat {
    pub nrows: usize,
    pub ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl CooMat {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        CooMat {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    pub fn triplets(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn to_csr(&self) -> CsrMat {
        CsrMat::from_triplets(self.nrows, self.ncols, &self.entries)
    }
}

/// Compressed sparse row matrix with summed duplicates.
#[derive(Debug, Clone)]
pub struct CsrMat {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMat {
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_unstable_by_key(|&k| (triplets[k].0, triplets[k].1));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &k in &order {
            let (r, c, v) = triplets[k];
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMat {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for (c, v) in self.row(r) {
                acc += v * x[c];
            }
            y[r] = acc;
        }
        y
    }

    /// y = A^T x
    pub fn mul_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for r in 0..self.nrows {
            let xr = x[r];
            if xr != 0.0 {
                for (c, v) in self.row(r) {
                    y[c] += v * xr;
                }
            }
        }
        y
    }

    /// x^T A y
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.mul_vec(y);
        dot(x, &ay)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, &x| m.max(x.abs()))
}

fn to_faer(
    nrows: usize,
    ncols: usize,
    triplets: &[(usize, usize, f64)],
) -> Result<SparseColMat<usize, f64>, SolverError> {
    let ts: Vec<Triplet<usize, usize, f64>> = triplets
        .iter()
        .map(|&(r, c, v)| Triplet::new(r, c, v))
        .collect();
    SparseColMat::try_new_from_triplets(nrows, ncols, &ts).map_err(|_| SolverError::SingularSaddle)
}

/// Sparse LU factorization of a square (generally indefinite) matrix.
pub struct SparseLu {
    n: usize,
    lu: Lu<usize, f64>,
}

impl SparseLu {
    pub fn factor(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self, SolverError> {
        faer::set_global_parallelism(faer::Par::Seq);
        let mat = to_faer(n, n, triplets)?;
        let symbolic =
            SymbolicLu::try_new(mat.symbolic()).map_err(|_| SolverError::SingularSaddle)?;
        let lu = Lu::try_new_with_symbolic(symbolic, mat.as_ref())
            .map_err(|_| SolverError::SingularSaddle)?;
        Ok(SparseLu { n, lu })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(rhs.len(), self.n);
        let b = faer::Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.lu.solve(&b);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

/// Sparse Cholesky for symmetric positive definite matrices; falls back on
/// LU when the numeric factorization fails.
#[allow(clippy::large_enum_variant)]
pub enum SparseSpd {
    Llt { n: usize, llt: Llt<usize, f64> },
    Lu(SparseLu),
}

impl SparseSpd {
    pub fn factor(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self, SolverError> {
        faer::set_global_parallelism(faer::Par::Seq);
        let mat = to_faer(n, n, triplets)?;
        let symbolic = match SymbolicLlt::try_new(mat.symbolic(), Side::Lower) {
            Ok(s) => s,
            Err(_) => return SparseLu::factor(n, triplets).map(SparseSpd::Lu),
        };
        match Llt::try_new_with_symbolic(symbolic, mat.as_ref(), Side::Lower) {
            Ok(llt) => Ok(SparseSpd::Llt { n, llt }),
            Err(_) => SparseLu::factor(n, triplets).map(SparseSpd::Lu),
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match self {
            SparseSpd::Llt { n, llt } => {
                let b = faer::Mat::<f64>::from_fn(*n, 1, |i, _| rhs[i]);
                let x = llt.solve(&b);
                (0..*n).map(|i| x[(i, 0)]).collect()
            }
            SparseSpd::Lu(lu) => lu.solve(rhs),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_merges_duplicates_and_multiplies() {
        let mut coo = CooMat::new(2, 3);
        coo.push(0, 0, 1.0);
        coo.push(0, 0, 2.0);
        coo.push(1, 2, 4.0);
        coo.push(0, 1, -1.0);
        let csr = coo.to_csr();
        assert_eq!(csr.nnz(), 3);
        let y = csr.mul_vec(&[1.0, 1.0, 1.0]);
        assert_eq!(y, vec![2.0, 4.0]);
        let yt = csr.mul_transpose_vec(&[1.0, 1.0]);
        assert_eq!(yt, vec![3.0, -1.0, 4.0]);
    }

    #[test]
    fn lu_solves_indefinite_system() {
        // [[2, 1], [1, 0]] x = (3, 1) -> x = (1, 1)
        let t = vec![(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 0.0)];
        let lu = SparseLu::factor(2, &t).unwrap();
        let x = lu.solve(&[3.0, 1.0]);
        assert!((x[0] - 1.0).abs() < 1e-14);
        assert!((x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn llt_solves_spd_system() {
        let t = vec![(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)];
        let chol = SparseSpd::factor(2, &t).unwrap();
        let x = chol.solve(&[5.0, 4.0]);
        assert!((x[0] - 1.0).abs() < 1e-14);
        assert!((x[1] - 1.0).abs() < 1e-14);
    }
}
