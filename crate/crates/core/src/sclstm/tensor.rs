use serde::{Deserialize, Serialize};

/// Dense row-major real matrix used for network weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    /// `y += W·x`.
    #[inline]
    pub fn matvec_add(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for (row, yr) in self.data.chunks_exact(self.cols).zip(y.iter_mut()) {
            *yr += dot(row, x);
        }
    }

    /// `y += Wᵀ·x`.
    #[inline]
    pub fn matvec_t_add(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(y.len(), self.cols);
        for (row, &xr) in self.data.chunks_exact(self.cols).zip(x) {
            if xr != 0.0 {
                axpy(xr, row, y);
            }
        }
    }

    /// `W += a·bᵀ`.
    #[inline]
    pub fn outer_add(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (row, &ar) in self.data.chunks_exact_mut(self.cols).zip(a) {
            if ar != 0.0 {
                axpy(ar, b, row);
            }
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..a.len() {
        s += a[j] * b[j];
    }
    s
}

/// `y += α·x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_against_loops() {
        let mut w = Mat::zeros(3, 5);
        for (i, v) in w.data.iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin();
        }
        let x: Vec<f64> = (0..5).map(|i| i as f64 - 2.0).collect();
        let mut y = vec![1.0; 3];
        w.matvec_add(&x, &mut y);
        for r in 0..3 {
            let expect = 1.0 + (0..5).map(|c| w.at(r, c) * x[c]).sum::<f64>();
            assert!((y[r] - expect).abs() < 1e-14);
        }
        let z = vec![0.5, -1.0, 2.0];
        let mut t = vec![0.0; 5];
        w.matvec_t_add(&z, &mut t);
        for c in 0..5 {
            let expect: f64 = (0..3).map(|r| w.at(r, c) * z[r]).sum();
            assert!((t[c] - expect).abs() < 1e-14);
        }
        let before = w.clone();
        w.outer_add(&z, &x);
        for r in 0..3 {
            for c in 0..5 {
                assert!((w.at(r, c) - before.at(r, c) - z[r] * x[c]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-300);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((sigmoid(20.0) - 1.0).abs() < 3e-9);
    }
}
