//! Dense `f64` vectors and row-major matrices.
//!
//! Everything in this crate is desk scale (d ≤ 512), so the containers are
//! plain `Vec<f64>` with checked constructors. All values are immutable in
//! spirit: operations return fresh allocations instead of mutating shared
//! state, which keeps concurrent diagnostics trivially safe.

use crate::error::{Error, Result};

/// Dense column vector of 64-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn new(data: Vec<f64>) -> Self {
        Vector { data }
    }

    pub fn zeros(dim: usize) -> Self {
        Vector { data: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn scale(&self, s: f64) -> Vector {
        Vector::new(self.data.iter().map(|x| x * s).collect())
    }

    pub fn add(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.dim(), other.dim());
        Vector::new(self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.dim(), other.dim());
        Vector::new(self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect())
    }

    /// self + s * other, the workhorse of every iterative loop here.
    pub fn axpy(&self, s: f64, other: &Vector) -> Vector {
        debug_assert_eq!(self.dim(), other.dim());
        Vector::new(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + s * b)
                .collect(),
        )
    }

    pub fn cosine(&self, other: &Vector) -> f64 {
        let na = self.norm();
        let nb = other.norm();
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        self.dot(other) / (na * nb)
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl std::ops::IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

/// Dense row-major matrix of 64-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Contract(format!(
                "matrix shape {}x{} does not match buffer length {}",
                rows,
                cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &e) in entries.iter().enumerate() {
            m[(i, i)] = e;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
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

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(c, r)] = self[(r, c)];
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Contract(format!(
                "matrix add shape mismatch: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Contract(format!(
                "matrix sub shape mismatch: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    /// y = A x
    pub fn matvec(&self, x: &Vector) -> Result<Vector> {
        if self.cols != x.dim() {
            return Err(Error::Contract(format!(
                "matvec: {}x{} matrix applied to {}-vector",
                self.rows,
                self.cols,
                x.dim()
            )));
        }
        let mut out = vec![0.0; self.rows];
        for r in 0..self.rows {
            let row = self.row(r);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x.as_slice()) {
                acc += a * b;
            }
            out[r] = acc;
        }
        Ok(Vector::new(out))
    }

    /// y = Aᵀ x without materializing the transpose.
    pub fn matvec_transposed(&self, x: &Vector) -> Result<Vector> {
        if self.rows != x.dim() {
            return Err(Error::Contract(format!(
                "matvec_transposed: {}x{} matrix applied to {}-vector",
                self.rows,
                self.cols,
                x.dim()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let xr = x[r];
            let row = self.row(r);
            for (c, a) in row.iter().enumerate() {
                out[c] += a * xr;
            }
        }
        Ok(Vector::new(out))
    }

    /// A^p by repeated multiplication, p ≥ 0.
    pub fn pow(&self, p: usize) -> Result<Matrix> {
        if self.rows != self.cols {
            return Err(Error::Contract("matrix power requires a square matrix".into()));
        }
        let mut acc = Matrix::identity(self.rows);
        for _ in 0..p {
            acc = matmul(&acc, self)?;
        }
        Ok(acc)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Standard dense product, ikj loop order for row-major locality.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Contract(format!(
            "matmul: inner dimensions differ ({}x{} times {}x{})",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a[(i, k)];
            if aik == 0.0 {
                continue;
            }
            let brow = b.row(k);
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::RngState;

    fn random_matrix(rng: &mut RngState, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.next_normal())
    }

    #[test]
    fn matmul_identity_is_noop() {
        let mut rng = RngState::new(7);
        let m = random_matrix(&mut rng, 3, 3);
        let i3 = Matrix::identity(3);
        let prod = matmul(&i3, &m).unwrap();
        assert_eq!(prod, m);
    }

    #[test]
    fn matmul_diagonal_product() {
        let a = Matrix::diag(&[2.0, 3.0]);
        let b = Matrix::diag(&[5.0, 7.0]);
        let p = matmul(&a, &b).unwrap();
        assert_eq!(p, Matrix::diag(&[10.0, 21.0]));
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut rng = RngState::new(42);
        let a = random_matrix(&mut rng, 4, 4);
        let b = random_matrix(&mut rng, 4, 4);
        let fast = matmul(&a, &b).unwrap();
        // brute-force triple loop, independent of the production loop order
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += a[(i, k)] * b[(k, j)];
                }
                assert!((fast[(i, j)] - acc).abs() <= 1e-12 * acc.abs().max(1.0));
            }
        }
    }

    #[test]
    fn matmul_dimension_mismatch_errors() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        assert!(matmul(&a, &b).is_err());
    }

    #[test]
    fn matvec_transposed_agrees_with_explicit_transpose() {
        let mut rng = RngState::new(3);
        let m = random_matrix(&mut rng, 5, 3);
        let x = Vector::new((0..5).map(|_| rng.next_normal()).collect());
        let a = m.matvec_transposed(&x).unwrap();
        let b = m.transpose().matvec(&x).unwrap();
        for i in 0..3 {
            assert!((a[i] - b[i]).abs() < 1e-14);
        }
    }
}
