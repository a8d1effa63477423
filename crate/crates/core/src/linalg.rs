//! Small dense helpers for 2×2 symmetric tensors and a compressed sparse row
//! matrix with a Jacobi-preconditioned conjugate gradient solver.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

/// Eigen-decomposition of a symmetric 2×2 matrix.
///
/// Eigenvalues are returned in descending order; the eigenvectors are the
/// columns of the returned orthogonal matrix.
pub fn sym_eigen(m: &Mat2) -> ([f64; 2], Mat2) {
    let a = m[(0, 0)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let c = m[(1, 1)];
    let mean = 0.5 * (a + c);
    let half_diff = 0.5 * (a - c);
    let rad = half_diff.hypot(b);
    let l1 = mean + rad;
    let l2 = mean - rad;
    let scale = a.abs().max(c.abs()).max(b.abs());
    if rad <= 1e-15 * scale || rad == 0.0 {
        return ([l1, l2], Mat2::identity());
    }
    // Rotation angle of the leading eigenvector.
    let theta = 0.5 * (2.0 * b).atan2(a - c);
    let (s, co) = theta.sin_cos();
    let q = Mat2::new(co, -s, s, co);
    ([l1, l2], q)
}

pub fn is_spd(m: &Mat2) -> bool {
    if !m.iter().all(|v| v.is_finite()) {
        return false;
    }
    let asym = (m[(0, 1)] - m[(1, 0)]).abs();
    let scale = m.abs().max();
    if asym > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return false;
    }
    m[(0, 0)] > 0.0 && m.determinant() > 0.0
}

pub fn check_spd(m: &Mat2, what: &str) -> Result<()> {
    if is_spd(m) {
        Ok(())
    } else {
        Err(Error::NotSpd(format!("{what}: {m:?}")))
    }
}

/// Spectral norm of a 2×2 matrix.
pub fn spectral_norm(m: &Mat2) -> f64 {
    let ata = m.transpose() * m;
    let (l, _) = sym_eigen(&ata);
    l[0].max(0.0).sqrt()
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a square matrix from `(row, col, value)` triplets, summing
    /// duplicates. Summation order is the insertion order, so the result is
    /// deterministic for a fixed triplet sequence.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len() / 3);
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len() / 3);
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < n && c < n);
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut t = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    t.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), t)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *yi = s;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec(x, &mut y);
        y
    }

    /// Largest absolute difference `|A_ij - A_ji|` and the largest absolute entry.
    pub fn asymmetry(&self) -> (f64, f64) {
        let mut worst = 0.0f64;
        let mut max = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                max = max.max(v.abs());
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        (worst, max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.apply(x))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outcome of a conjugate gradient solve.
#[derive(Debug, Clone)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

pub fn default_cg_cap(n: usize) -> usize {
    50 * (n as f64).sqrt().ceil() as usize + 1000
}

/// Jacobi-preconditioned conjugate gradients from a zero initial iterate.
pub fn pcg(a: &CsrMatrix, b: &[f64], rel_tol: f64, max_iter: usize) -> Result<(Vec<f64>, CgReport)> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::SizeMismatch(format!(
            "rhs has length {} for a {n}×{n} system",
            b.len()
        )));
    }
    let mut x = vec![0.0; n];
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok((
            x,
            CgReport {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            if d > 0.0 {
                Ok(1.0 / d)
            } else {
                Err(Error::Singular(format!("non-positive diagonal {d:e} in row {i}")))
            }
        })
        .collect::<Result<_>>()?;

    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut history = Vec::new();
    for it in 1..=max_iter {
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Singular(format!(
                "non-positive curvature pᵀAp = {pap:e} at iteration {it}"
            )));
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        let rel = norm2(&r) / bnorm;
        history.push(rel);
        if rel <= rel_tol {
            return Ok((
                x,
                CgReport {
                    iterations: it,
                    relative_residual: rel,
                },
            ));
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
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

/// Dense Cholesky solve, used as an oracle and for very small systems.
pub fn solve_dense_spd(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let chol = a
        .to_dense()
        .cholesky()
        .ok_or_else(|| Error::Singular("dense Cholesky factorization failed".into()))?;
    Ok(chol.solve(&DVector::from_column_slice(b)).as_slice().to_vec())
}
