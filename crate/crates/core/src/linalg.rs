//! Dense real kernels: row-major matrices over `Vec<f64>` vectors.

use crate::error::{check_len, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_len("Matrix::from_vec", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_len("Matrix::from_rows", cols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|a| *a *= s);
    }

    /// `self += s · u vᵀ`.
    pub fn add_outer(&mut self, s: f64, u: &[f64], v: &[f64]) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for (row, &ui) in self.data.chunks_exact_mut(self.cols).zip(u) {
            let a = s * ui;
            if a != 0.0 {
                for (x, &vj) in row.iter_mut().zip(v) {
                    *x += a * vj;
                }
            }
        }
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }
}

/// `A x`.
pub fn matvec(a: &Matrix, x: &[f64]) -> Result<Vec<f64>> {
    check_len("matvec", a.cols, x.len())?;
    Ok(a.data
        .chunks_exact(a.cols.max(1))
        .take(a.rows)
        .map(|row| dot(row, x))
        .collect())
}

/// `Aᵀ y`.
pub fn matvec_t(a: &Matrix, y: &[f64]) -> Result<Vec<f64>> {
    check_len("matvec_t", a.rows, y.len())?;
    let mut out = vec![0.0; a.cols];
    if a.cols == 0 {
        return Ok(out);
    }
    for (row, &yi) in a.data.chunks_exact(a.cols).zip(y) {
        if yi != 0.0 {
            for (o, &aij) in out.iter_mut().zip(row) {
                *o += aij * yi;
            }
        }
    }
    Ok(out)
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn ewise(x: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
    x.iter().map(|&a| f(a)).collect()
}

/// Element-wise product `x ⊙ y`.
pub fn hadamard(x: &[f64], y: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).collect()
}

/// `y += s · x`.
pub fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

pub fn relu(a: f64) -> f64 {
    a.max(0.0)
}

/// Scales `x` to unit norm; `None` when its norm is below `eps`.
pub fn normalized(x: &[f64], eps: f64) -> Option<Vec<f64>> {
    let nrm = norm2(x);
    (nrm >= eps).then(|| x.iter().map(|a| a / nrm).collect())
}
