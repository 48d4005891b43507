//! Dense row-major matrices and the scalar nonlinearities used throughout.
//!
//! Every binary operation checks shapes and returns [`Error::Contract`] on a
//! mismatch; nothing broadcasts implicitly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Inputs to `exp` are clamped to this magnitude so the result stays finite.
pub const SIGMOID_CLAMP: f64 = 500.0;

/// Largest `f64` strictly below one.
const ONE_MINUS_ULP: f64 = 1.0 - f64::EPSILON / 2.0;

/// Row count above which `matmul` splits work across the rayon pool.
const PAR_ROWS: usize = 32;

/// Logistic sigmoid, strictly inside (0, 1) for every finite input.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP);
    let s = 1.0 / (1.0 + (-z).exp());
    s.min(ONE_MINUS_ULP)
}

/// Numerically stable `ln(Σ exp(v_i))`. Returns `-inf` for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        ensure!(
            data.len() == rows * cols,
            Contract,
            "matrix data length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            ensure!(
                r.len() == cols,
                Contract,
                "row {i} has length {} but row 0 has length {cols}",
                r.len()
            );
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Builds a matrix by evaluating `f(row, col)` for every entry.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
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

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Copies the given rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        ensure!(
            self.cols == rhs.rows,
            Contract,
            "matmul inner dimensions differ: {}x{} * {}x{}",
            self.rows,
            self.cols,
            rhs.rows,
            rhs.cols
        );
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        if rhs.cols == 0 {
            return Ok(out);
        }
        let kernel = |(i, out_row): (usize, &mut [f64])| {
            let lhs_row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (k, &a) in lhs_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        };
        if self.rows >= PAR_ROWS {
            out.data
                .par_chunks_mut(rhs.cols)
                .enumerate()
                .for_each(kernel);
        } else {
            out.data.chunks_mut(rhs.cols).enumerate().for_each(kernel);
        }
        Ok(out)
    }

    /// `selfᵀ · rhs` without materializing the transpose of `rhs`.
    pub fn t_matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        ensure!(
            self.rows == rhs.rows,
            Contract,
            "t_matmul row counts differ: {}x{} vs {}x{}",
            self.rows,
            self.cols,
            rhs.rows,
            rhs.cols
        );
        self.transpose().matmul(rhs)
    }

    /// Matrix-vector product `self · v`.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        ensure!(
            v.len() == self.cols,
            Contract,
            "mul_vec: vector length {} but matrix has {} columns",
            v.len(),
            self.cols
        );
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// Vector-matrix product `vᵀ · self`.
    pub fn vec_mul(&self, v: &[f64]) -> Result<Vec<f64>> {
        ensure!(
            v.len() == self.rows,
            Contract,
            "vec_mul: vector length {} but matrix has {} rows",
            v.len(),
            self.rows
        );
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &m) in out.iter_mut().zip(self.row(i)) {
                *o += vi * m;
            }
        }
        Ok(out)
    }

    fn check_same_shape(&self, other: &Matrix, op: &str) -> Result<()> {
        ensure!(
            self.shape() == other.shape(),
            Contract,
            "{op}: shapes differ: {}x{} vs {}x{}",
            self.rows,
            self.cols,
            other.rows,
            other.cols
        );
        Ok(())
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "add")?;
        let mut out = self.clone();
        out.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
        Ok(out)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "sub")?;
        let mut out = self.clone();
        out.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a -= b);
        Ok(out)
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        let mut out = self.clone();
        out.scale_in_place(factor);
        out
    }

    pub fn scale_in_place(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|a| *a *= factor);
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &Matrix) -> Result<()> {
        self.check_same_shape(other, "add_scaled")?;
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += alpha * b);
        Ok(())
    }

    /// Adds `bias[j]` to every entry of column `j`.
    pub fn add_row_vector(&mut self, bias: &[f64]) -> Result<()> {
        ensure!(
            bias.len() == self.cols,
            Contract,
            "add_row_vector: bias length {} but matrix has {} columns",
            bias.len(),
            self.cols
        );
        if self.cols == 0 {
            return Ok(());
        }
        for row in self.data.chunks_mut(self.cols) {
            row.iter_mut().zip(bias).for_each(|(a, b)| *a += b);
        }
        Ok(())
    }

    /// Sum of each column, i.e. the sum over rows. Accumulates in row order.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            out.iter_mut().zip(self.row(i)).for_each(|(o, v)| *o += v);
        }
        out
    }

    pub fn column_means(&self) -> Vec<f64> {
        let n = self.rows.max(1) as f64;
        self.column_sums().into_iter().map(|s| s / n).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn map_in_place(&mut self, f: impl Fn(f64) -> f64) {
        self.data.iter_mut().for_each(|v| *v = f(*v));
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn frobenius_norm(&self) -> f64 {
        l2_norm(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        self.check_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// Elementwise sigmoid of `inputs · weights + bias`.
pub(crate) fn affine_sigmoid(inputs: &Matrix, weights: &Matrix, bias: &[f64]) -> Result<Matrix> {
    let mut z = inputs.matmul(weights)?;
    z.add_row_vector(bias)?;
    z.map_in_place(sigmoid);
    Ok(z)
}

pub(crate) fn check_len(what: &str, actual: usize, expected: usize) -> Result<()> {
    if actual != expected {
        return Err(Error::Contract(format!(
            "{what}: length {actual}, expected {expected}"
        )));
    }
    Ok(())
}
