//! Dense row-major matrices of 32-bit floats.
//!
//! All reductions accumulate in 64-bit floats and round to 32-bit on store,
//! which keeps results reproducible across reorderings tight enough for the
//! quality metrics downstream.

use alloc::{vec, vec::Vec};

use crate::error::{param_err, shape_err, Result};

/// A `rows x cols` matrix stored row-major as a flat `f32` slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    /// Build a matrix from a flat row-major vector, validating length and
    /// finiteness. This is the entry point for generated and file-loaded data.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape_err!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(param_err!(
                "non-finite matrix entry {} at flat index {pos}",
                data[pos]
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Internal constructor for values produced by this crate's own
    /// arithmetic; skips the finiteness scan.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_raw(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f32 {
        self.data
            .iter()
            .fold(0.0f32, |acc, &v| acc.max(libm::fabsf(v)))
    }
}

/// Dense product `a x b` (or `a x b^T` when `transpose_b`).
///
/// Each dot product accumulates in f64 and rounds to f32 on store.
pub fn matmul(a: &Matrix, b: &Matrix, transpose_b: bool) -> Result<Matrix> {
    let (b_inner, b_outer) = if transpose_b {
        (b.cols, b.rows)
    } else {
        (b.rows, b.cols)
    };
    if a.cols != b_inner {
        return Err(shape_err!(
            "matmul inner dimensions disagree: {}x{} vs {}x{} (transpose_b={transpose_b})",
            a.rows,
            a.cols,
            b.rows,
            b.cols
        ));
    }
    let mut out = vec![0.0f32; a.rows * b_outer];
    if transpose_b {
        for i in 0..a.rows {
            let ra = a.row(i);
            let ro = &mut out[i * b_outer..(i + 1) * b_outer];
            for j in 0..b_outer {
                let rb = b.row(j);
                let mut acc = 0.0f64;
                for t in 0..a.cols {
                    acc += ra[t] as f64 * rb[t] as f64;
                }
                ro[j] = acc as f32;
            }
        }
    } else {
        // Row-major friendly ordering: accumulate per output row in f64.
        let mut acc_row = vec![0.0f64; b_outer];
        for i in 0..a.rows {
            acc_row.iter_mut().for_each(|v| *v = 0.0);
            let ra = a.row(i);
            for (t, &a_it) in ra.iter().enumerate() {
                let rb = b.row(t);
                let a_it = a_it as f64;
                for (acc, &b_tj) in acc_row.iter_mut().zip(rb) {
                    *acc += a_it * b_tj as f64;
                }
            }
            for (o, &acc) in out[i * b_outer..(i + 1) * b_outer].iter_mut().zip(&acc_row) {
                *o = acc as f32;
            }
        }
    }
    Ok(Matrix::from_raw(a.rows, b_outer, out))
}

/// Numerically stable softmax over each row of `scale * s`.
///
/// Per row, the scaled maximum is subtracted before exponentiation, so the
/// result is shift-invariant and never overflows for finite input.
pub fn row_softmax(s: &Matrix, scale: f32) -> Matrix {
    let scale = scale as f64;
    let mut out = vec![0.0f32; s.data.len()];
    for i in 0..s.rows {
        let row = s.row(i);
        let out_row = &mut out[i * s.cols..(i + 1) * s.cols];
        let max = row
            .iter()
            .fold(f64::NEG_INFINITY, |m, &v| m.max(scale * v as f64));
        let mut sum = 0.0f64;
        for (o, &v) in out_row.iter_mut().zip(row) {
            let e = libm::exp(scale * v as f64 - max);
            sum += e;
            *o = e as f32;
        }
        for o in out_row.iter_mut() {
            *o = (*o as f64 / sum) as f32;
        }
    }
    Matrix::from_raw(s.rows, s.cols, out)
}

/// Largest absolute elementwise difference, in f64.
pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(shape_err!(
            "max_abs_diff on {}x{} vs {}x{}",
            a.rows,
            a.cols,
            b.rows,
            b.cols
        ));
    }
    Ok(a.data
        .iter()
        .zip(&b.data)
        .fold(0.0f64, |m, (&x, &y)| m.max(libm::fabs(x as f64 - y as f64))))
}

/// Rescale each row to unit L2 norm. Zero rows are left unchanged.
pub fn l2_normalize_rows(m: &Matrix) -> Matrix {
    let mut out = m.data.clone();
    for i in 0..m.rows {
        let row = &mut out[i * m.cols..(i + 1) * m.cols];
        let norm = libm::sqrt(row.iter().map(|&v| v as f64 * v as f64).sum::<f64>());
        if norm > 0.0 {
            for v in row.iter_mut() {
                *v = (*v as f64 / norm) as f32;
            }
        }
    }
    Matrix::from_raw(m.rows, m.cols, out)
}
