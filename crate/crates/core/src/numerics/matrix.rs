use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::NumericsError;

/// Dense complex matrix stored row-major.
///
/// Column vectors are `n × 1` matrices. Every constructor rejects empty
/// shapes, so `rows ≥ 1` and `cols ≥ 1` always hold.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self, NumericsError> {
        if rows == 0 || cols == 0 {
            return Err(NumericsError::InvalidDimension(format!(
                "matrix shape {rows}x{cols} is empty"
            )));
        }
        if data.len() != rows * cols {
            return Err(NumericsError::InvalidDimension(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix shape {rows}x{cols} is empty");
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            out[(i, i)] = Complex64::new(1.0, 0.0);
        }
        out
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut out = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                out.data[r * cols + c] = f(r, c);
            }
        }
        out
    }

    /// Builds an `n × 1` column vector.
    pub fn column(values: Vec<Complex64>) -> Self {
        let n = values.len();
        assert!(n > 0, "empty column vector");
        Self {
            rows: n,
            cols: 1,
            data: values,
        }
    }

    /// Builds a `1 × n` row vector.
    pub fn row(values: Vec<Complex64>) -> Self {
        let n = values.len();
        assert!(n > 0, "empty row vector");
        Self {
            rows: 1,
            cols: n,
            data: values,
        }
    }

    /// Diagonal matrix from the entries of a vector (row or column).
    pub fn diag(vector: &ComplexMatrix) -> Self {
        let n = vector.len();
        let mut out = Self::zeros(n, n);
        for (i, v) in vector.data.iter().enumerate() {
            out[(i, i)] = *v;
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_vector(&self) -> bool {
        self.rows == 1 || self.cols == 1
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn iter(&self) -> impl Iterator<Item = &Complex64> {
        self.data.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn col(&self, c: usize) -> ComplexMatrix {
        ComplexMatrix::column((0..self.rows).map(|r| self[(r, c)]).collect())
    }

    pub fn row_at(&self, r: usize) -> ComplexMatrix {
        ComplexMatrix::row(self.data[r * self.cols..(r + 1) * self.cols].to_vec())
    }

    pub fn set_col(&mut self, c: usize, values: &ComplexMatrix) {
        assert_eq!(values.len(), self.rows, "column length mismatch");
        for r in 0..self.rows {
            self[(r, c)] = values.data[r];
        }
    }

    pub fn transpose(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn conj(&self) -> ComplexMatrix {
        self.map(|z| z.conj())
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn scale(&self, factor: Complex64) -> ComplexMatrix {
        self.map(|z| z * factor)
    }

    pub fn scale_real(&self, factor: f64) -> ComplexMatrix {
        self.map(|z| z * factor)
    }

    pub fn matmul(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
        if self.cols != rhs.rows {
            return Err(NumericsError::InvalidDimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = ComplexMatrix::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            let lhs_row = &self.data[r * self.cols..(r + 1) * self.cols];
            let out_row = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
            for (k, &a) in lhs_row.iter().enumerate() {
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    fn zip_with(
        &self,
        rhs: &ComplexMatrix,
        op: &str,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<ComplexMatrix, NumericsError> {
        if self.shape() != rhs.shape() {
            return Err(NumericsError::InvalidDimension(format!(
                "{op} of {}x{} and {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
        self.zip_with(rhs, "sum", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
        self.zip_with(rhs, "difference", |a, b| a - b)
    }

    pub fn hadamard(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
        self.zip_with(rhs, "elementwise product", |a, b| a * b)
    }

    pub fn add_assign(&mut self, rhs: &ComplexMatrix) -> Result<(), NumericsError> {
        if self.shape() != rhs.shape() {
            return Err(NumericsError::InvalidDimension(format!(
                "in-place sum of {}x{} and {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
        Ok(())
    }

    /// Squared Frobenius norm.
    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn vstack(blocks: &[ComplexMatrix]) -> Result<ComplexMatrix, NumericsError> {
        let first = blocks
            .first()
            .ok_or_else(|| NumericsError::InvalidDimension("vstack of zero blocks".into()))?;
        let cols = first.cols;
        if blocks.iter().any(|b| b.cols != cols) {
            return Err(NumericsError::InvalidDimension(
                "vstack blocks have differing column counts".into(),
            ));
        }
        let rows = blocks.iter().map(|b| b.rows).sum();
        let data = blocks.iter().flat_map(|b| b.data.iter().copied()).collect();
        ComplexMatrix::new(rows, cols, data)
    }

    /// Places matrices with equal row counts side by side.
    pub fn hstack(blocks: &[ComplexMatrix]) -> Result<ComplexMatrix, NumericsError> {
        let transposed: Vec<_> = blocks.iter().map(|b| b.transpose()).collect();
        Ok(ComplexMatrix::vstack(&transposed)?.transpose())
    }

    /// Copies the first `n` rows.
    pub fn top_rows(&self, n: usize) -> ComplexMatrix {
        assert!(n >= 1 && n <= self.rows);
        ComplexMatrix {
            rows: n,
            cols: self.cols,
            data: self.data[..n * self.cols].to_vec(),
        }
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.6}{:+.6}j ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rejects_empty_and_mismatched_shapes() {
        assert!(ComplexMatrix::new(0, 3, vec![]).is_err());
        assert!(ComplexMatrix::new(2, 2, vec![c(1.0, 0.0); 3]).is_err());
    }

    #[test]
    fn matmul_matches_hand_product() {
        let a = ComplexMatrix::new(2, 2, vec![c(1.0, 1.0), c(0.0, 2.0), c(3.0, 0.0), c(1.0, -1.0)])
            .unwrap();
        let b = ComplexMatrix::column(vec![c(1.0, 0.0), c(0.0, 1.0)]);
        let p = a.matmul(&b).unwrap();
        assert_eq!(p[(0, 0)], c(1.0, 1.0) + c(0.0, 2.0) * c(0.0, 1.0));
        assert_eq!(p[(1, 0)], c(3.0, 0.0) + c(1.0, -1.0) * c(0.0, 1.0));
        assert!(a.matmul(&a.top_rows(1)).is_err());
    }

    #[test]
    fn adjoint_conjugates_and_transposes() {
        let a = ComplexMatrix::new(1, 2, vec![c(1.0, 2.0), c(3.0, -4.0)]).unwrap();
        let h = a.adjoint();
        assert_eq!(h.shape(), (2, 1));
        assert_eq!(h[(0, 0)], c(1.0, -2.0));
        assert_eq!(h[(1, 0)], c(3.0, 4.0));
    }

    #[test]
    fn stacking_preserves_blocks() {
        let a = ComplexMatrix::identity(2);
        let b = ComplexMatrix::zeros(1, 2);
        let v = ComplexMatrix::vstack(&[a.clone(), b]).unwrap();
        assert_eq!(v.shape(), (3, 2));
        let h = ComplexMatrix::hstack(&[a.clone(), a]).unwrap();
        assert_eq!(h.shape(), (2, 4));
        assert_eq!(h[(1, 3)], c(1.0, 0.0));
    }
}
