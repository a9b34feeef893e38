//! Small dense matrices with LU factorization.
//!
//! Everything here works on `m x m` row-major matrices for the ambient
//! dimensions this crate actually meets (typically 1..=3, occasionally more).
//! Determinants come from Gaussian elimination with partial pivoting; the
//! factorization is reusable for repeated solves against a fixed matrix,
//! which is what the contraction iteration in [`crate::diff`] needs.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LinalgError {
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("dimension mismatch: matrix is {m}x{m}, vector has length {len}")]
    DimensionMismatch { m: usize, len: usize },
}

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    m: usize,
    a: Vec<f64>,
}

impl Matrix {
    pub fn zeros(m: usize) -> Self {
        assert!(m >= 1, "matrix dimension must be at least 1");
        Matrix {
            m,
            a: vec![0.0; m * m],
        }
    }

    pub fn identity(m: usize) -> Self {
        let mut out = Self::zeros(m);
        for i in 0..m {
            out.set(i, i, 1.0);
        }
        out
    }

    /// Builds from rows; panics if the rows are not square.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let m = rows.len();
        let mut out = Self::zeros(m);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), m, "row {i} has wrong length");
            for (j, v) in row.iter().enumerate() {
                out.set(i, j, *v);
            }
        }
        out
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut out = Self::zeros(diag.len());
        for (i, v) in diag.iter().enumerate() {
            out.set(i, i, *v);
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.m + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.m + j] = v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.m);
        (0..self.m)
            .map(|i| (0..self.m).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    /// Largest absolute entry; 0 for the zero matrix.
    pub fn max_abs(&self) -> f64 {
        self.a.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Operator norm induced by the max norm (largest absolute row sum).
    /// A valid Lipschitz constant for `x -> Ax` under that norm.
    pub fn op_norm_max(&self) -> f64 {
        (0..self.m)
            .map(|i| (0..self.m).map(|j| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn determinant(&self) -> f64 {
        LuFactors::new(self).det()
    }
}

/// LU factorization with partial pivoting, `PA = LU` stored compactly.
#[derive(Debug, Clone)]
pub struct LuFactors {
    m: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
    sign: f64,
    singular: bool,
}

impl LuFactors {
    pub fn new(a: &Matrix) -> Self {
        let m = a.dim();
        let mut lu = a.a.clone();
        let mut piv: Vec<usize> = (0..m).collect();
        let mut sign = 1.0;
        let mut singular = false;
        let scale = a.max_abs();

        for k in 0..m {
            // pick the largest pivot in column k
            let mut p = k;
            let mut best = lu[k * m + k].abs();
            for i in (k + 1)..m {
                let v = lu[i * m + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if p != k {
                for j in 0..m {
                    lu.swap(k * m + j, p * m + j);
                }
                piv.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[k * m + k];
            if pivot.abs() <= scale * 1e-300 || pivot == 0.0 {
                singular = true;
                continue;
            }
            for i in (k + 1)..m {
                let factor = lu[i * m + k] / pivot;
                lu[i * m + k] = factor;
                for j in (k + 1)..m {
                    lu[i * m + j] -= factor * lu[k * m + j];
                }
            }
        }
        LuFactors {
            m,
            lu,
            piv,
            sign,
            singular,
        }
    }

    pub fn det(&self) -> f64 {
        if self.singular {
            return 0.0;
        }
        let mut d = self.sign;
        for k in 0..self.m {
            d *= self.lu[k * self.m + k];
        }
        d
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    /// Solves `A x = b` using the stored factors.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if b.len() != self.m {
            return Err(LinalgError::DimensionMismatch {
                m: self.m,
                len: b.len(),
            });
        }
        if self.singular {
            return Err(LinalgError::Singular);
        }
        let m = self.m;
        let mut x: Vec<f64> = self.piv.iter().map(|&p| b[p]).collect();
        // forward substitution (unit lower triangle)
        for i in 1..m {
            for j in 0..i {
                x[i] -= self.lu[i * m + j] * x[j];
            }
        }
        // back substitution
        for i in (0..m).rev() {
            for j in (i + 1)..m {
                x[i] -= self.lu[i * m + j] * x[j];
            }
            x[i] /= self.lu[i * m + i];
        }
        Ok(x)
    }
}
