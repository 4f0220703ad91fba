//! Compressed sparse row matrices and the preconditioned conjugate-gradient
//! contract used by every solver in the crate.
//!
//! Assembly is deterministic: triplets are pushed in a fixed element
//! traversal order and merged with a stable sort, so identical inputs give
//! bit-identical matrices.

use crate::error::{Error, Result};
use std::io::Write;

/// Symmetric sparse operator in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
    /// Set when the pattern and values are symmetric by construction.
    pub symmetric: bool,
}

impl SparseOperator {
    /// Builds a CSR matrix from triplets. Duplicate entries are summed in
    /// insertion order (stable sort), which makes assembly deterministic.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        mut triplets: Vec<(u32, u32, f64)>,
        symmetric: bool,
    ) -> Result<Self> {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut last: Option<(u32, u32)> = None;
        for &(r, c, v) in &triplets {
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "non-finite matrix entry at ({r}, {c})"
                )));
            }
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c as usize);
                values.push(v);
                row_ptr[r as usize + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
            symmetric,
        })
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(out.len(), self.n_rows);
        for i in 0..self.n_rows {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            out[i] = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows];
        self.matvec(x, &mut out);
        out
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut diag = vec![0.0; self.n_rows];
        for i in 0..self.n_rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col_idx[k] == i {
                    diag[i] = self.values[k];
                }
            }
        }
        diag
    }

    /// x' A x for a square operator.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n_rows {
            let mut row = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row += self.values[k] * x[self.col_idx[k]];
            }
            acc += x[i] * row;
        }
        acc
    }

    /// out = c1 * self + c2 * other, requiring identical sparsity patterns
    /// (stiffness and mass from the same mesh share one pattern).
    pub fn linear_combination(&self, c1: f64, other: &SparseOperator, c2: f64) -> SparseOperator {
        debug_assert_eq!(self.row_ptr, other.row_ptr);
        debug_assert_eq!(self.col_idx, other.col_idx);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| c1 * a + c2 * b)
            .collect();
        SparseOperator {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values,
            symmetric: self.symmetric && other.symmetric,
        }
    }

    pub fn scaled(&self, c: f64) -> SparseOperator {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= c;
        }
        out
    }

    pub fn max_abs_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n_rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                let mut vt = 0.0;
                for kk in self.row_ptr[j]..self.row_ptr[j + 1] {
                    if self.col_idx[kk] == i {
                        vt = self.values[kk];
                    }
                }
                worst = worst.max((self.values[k] - vt).abs());
            }
        }
        worst
    }

    /// Writes the matrix in Matrix Market coordinate text format.
    pub fn write_matrix_market(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n_rows, self.n_cols, self.values.len())?;
        for i in 0..self.n_rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                writeln!(w, "{} {} {:.16e}", i + 1, self.col_idx[k] + 1, self.values[k])?;
            }
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn project_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= mean;
    }
}

/// Options for the symmetric positive (semi)definite solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    /// Project constants out of iterates and residuals every iteration
    /// (periodic singular systems in H1_per / R).
    pub project_constants: bool,
    /// Iteration cap; defaults to 50 * dimension when zero.
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            project_constants: false,
            max_iter: 0,
        }
    }
}

/// Jacobi-preconditioned conjugate gradients with optional mean projection.
/// Returns the solution once the relative residual drops below `tol`.
pub fn solve_spd(op: &SparseOperator, rhs: &[f64], opts: SolveOptions) -> Result<Vec<f64>> {
    solve_spd_from(op, rhs, None, opts)
}

/// Same contract as [`solve_spd`] but warm-started from `x0`.
pub fn solve_spd_from(
    op: &SparseOperator,
    rhs: &[f64],
    x0: Option<&[f64]>,
    opts: SolveOptions,
) -> Result<Vec<f64>> {
    let n = op.n_rows;
    debug_assert_eq!(rhs.len(), n);
    let max_iter = if opts.max_iter == 0 { 50 * n.max(4) } else { opts.max_iter };

    let mut b = rhs.to_vec();
    if opts.project_constants {
        project_mean(&mut b);
    }
    let b_norm = norm(&b);
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }

    let diag = op.diagonal();
    let inv_diag: Vec<f64> = diag
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = match x0 {
        Some(v) => v.to_vec(),
        None => vec![0.0; n],
    };
    if opts.project_constants {
        project_mean(&mut x);
    }

    let mut r = vec![0.0; n];
    op.matvec(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    if opts.project_constants {
        project_mean(&mut r);
    }

    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(&ri, &di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];

    for iter in 0..max_iter {
        let res = norm(&r);
        if res <= opts.tol * b_norm {
            return Ok(x);
        }
        op.matvec(&p, &mut q);
        if opts.project_constants {
            project_mean(&mut q);
        }
        let pq = dot(&p, &q);
        if pq <= 0.0 || !pq.is_finite() {
            return Err(Error::Convergence {
                context: "cg (indefinite or breakdown)".into(),
                residual: res / b_norm,
                iterations: iter,
            });
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        if opts.project_constants {
            project_mean(&mut x);
            project_mean(&mut r);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Convergence {
        context: "cg".into(),
        residual: norm(&r) / b_norm,
        iterations: max_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(n: usize) -> SparseOperator {
        let triplets = (0..n as u32).map(|i| (i, i, 1.0)).collect();
        SparseOperator::from_triplets(n, n, triplets, true).unwrap()
    }

    #[test]
    fn identity_solve_returns_rhs() {
        let op = identity(7);
        let b: Vec<f64> = (0..7).map(|i| i as f64 - 3.0).collect();
        let x = solve_spd(&op, &b, SolveOptions::default()).unwrap();
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn projected_solve_of_constant_rhs_is_zero() {
        let op = identity(5);
        let b = vec![3.0; 5];
        let x = solve_spd(
            &op,
            &b,
            SolveOptions {
                project_constants: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(x.iter().all(|&v| v.abs() < 1e-14));
    }

    #[test]
    fn duplicate_triplets_are_summed() {
        let trip = vec![(0, 0, 1.0), (0, 0, 2.0), (1, 1, 4.0), (0, 1, -1.0)];
        let op = SparseOperator::from_triplets(2, 2, trip, false).unwrap();
        assert_eq!(op.values, vec![3.0, -1.0, 4.0]);
        assert_eq!(op.col_idx, vec![0, 1, 1]);
    }

    #[test]
    fn iteration_cap_reports_residual() {
        // 2x2 SPD system with an absurd cap of 1 iteration.
        let trip = vec![(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)];
        let op = SparseOperator::from_triplets(2, 2, trip, true).unwrap();
        let err = solve_spd(
            &op,
            &[1.0, -1.0],
            SolveOptions {
                tol: 1e-16,
                max_iter: 1,
                ..Default::default()
            },
        )
        .unwrap_err();
        match err {
            Error::Convergence { iterations, .. } => assert_eq!(iterations, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn matrix_market_round_shape() {
        let trip = vec![(0, 0, 1.5), (1, 0, -0.5), (1, 1, 2.0)];
        let op = SparseOperator::from_triplets(2, 2, trip, false).unwrap();
        let mut buf = Vec::new();
        op.write_matrix_market(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("%%MatrixMarket"));
        assert!(text.contains("2 2 3"));
    }
}
