use std::f64::consts::PI;

use num_complex::Complex64;

use super::{ComplexMatrix, NumericsError};

/// Singular-value cut-off relative to the largest pivot.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// `n × n` DFT matrix with `V[p,q] = exp(-j2πpq/n)`; its columns serve as
/// RIS reflection patterns.
pub fn dft_matrix(n: usize) -> Result<ComplexMatrix, NumericsError> {
    if n == 0 {
        return Err(NumericsError::InvalidDimension("DFT size must be at least 1".into()));
    }
    Ok(ComplexMatrix::from_fn(n, n, |p, q| {
        // reduce the exponent first so large p·q keeps full precision
        let k = (p * q) % n;
        Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64)
    }))
}

/// Principal square root: `Re{w} ≥ 0`, and `Im{w} ≥ 0` whenever `Re{w} = 0`.
pub fn principal_sqrt(z: Complex64) -> Complex64 {
    if z.im == 0.0 {
        // num-complex follows the sign of a negative zero imaginary part
        return if z.re >= 0.0 {
            Complex64::new(z.re.sqrt(), 0.0)
        } else {
            Complex64::new(0.0, (-z.re).sqrt())
        };
    }
    let w = z.sqrt();
    if w.re < 0.0 || (w.re == 0.0 && w.im < 0.0) {
        -w
    } else {
        w
    }
}

/// Householder QR factorisation with column pivoting of a tall matrix.
///
/// Reflectors are stored as unit vectors together with the triangular
/// factor so that `Qᴴ` can be applied to any right-hand side afterwards.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    rows: usize,
    cols: usize,
    r: ComplexMatrix,
    reflectors: Vec<Vec<Complex64>>,
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    pub fn new(a: &ComplexMatrix) -> Result<Self, NumericsError> {
        let (m, n) = a.shape();
        if m < n {
            return Err(NumericsError::InvalidDimension(format!(
                "least squares needs rows >= cols, got {m}x{n}"
            )));
        }
        let mut work = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut reflectors = Vec::with_capacity(n);
        let mut col_norms: Vec<f64> = (0..n)
            .map(|j| (0..m).map(|i| work[(i, j)].norm_sqr()).sum())
            .collect();

        for k in 0..n {
            // exact recomputation keeps the pivot choice independent of downdate roundoff
            for (j, norm) in col_norms.iter_mut().enumerate().skip(k) {
                *norm = (k..m).map(|i| work[(i, j)].norm_sqr()).sum();
            }
            let pivot = (k..n)
                .max_by(|&x, &y| col_norms[x].total_cmp(&col_norms[y]).then(y.cmp(&x)))
                .unwrap_or(k);
            if pivot != k {
                for i in 0..m {
                    let tmp = work[(i, k)];
                    work[(i, k)] = work[(i, pivot)];
                    work[(i, pivot)] = tmp;
                }
                perm.swap(k, pivot);
                col_norms.swap(k, pivot);
            }

            let norm = col_norms[k].sqrt();
            let mut v: Vec<Complex64> = (k..m).map(|i| work[(i, k)]).collect();
            if norm == 0.0 {
                reflectors.push(vec![Complex64::new(0.0, 0.0); m - k]);
                continue;
            }
            let x0 = v[0];
            let phase = if x0.norm() == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                x0 / x0.norm()
            };
            let alpha = -phase * norm;
            v[0] -= alpha;
            let v_norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if v_norm > 0.0 {
                for z in v.iter_mut() {
                    *z /= v_norm;
                }
            }
            apply_reflector(&mut work, &v, k, k);
            work[(k, k)] = alpha;
            for i in k + 1..m {
                work[(i, k)] = Complex64::new(0.0, 0.0);
            }
            reflectors.push(v);
        }

        let largest = if n > 0 { work[(0, 0)].norm() } else { 0.0 };
        let rank = (0..n)
            .take_while(|&k| largest > 0.0 && work[(k, k)].norm() > RANK_TOLERANCE * largest)
            .count();

        Ok(Self {
            rows: m,
            cols: n,
            r: work,
            reflectors,
            perm,
            rank,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.cols
    }

    /// Least-squares solution of `A X = B` for every column of `B`.
    pub fn solve(&self, b: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
        if b.rows() != self.rows {
            return Err(NumericsError::InvalidDimension(format!(
                "right-hand side has {} rows, system has {}",
                b.rows(),
                self.rows
            )));
        }
        if !self.is_full_rank() {
            return Err(NumericsError::RankDeficient {
                rank: self.rank,
                required: self.cols,
            });
        }
        let mut qtb = b.clone();
        for (k, v) in self.reflectors.iter().enumerate() {
            apply_reflector(&mut qtb, v, k, 0);
        }
        let n = self.cols;
        let nrhs = b.cols();
        let mut x = ComplexMatrix::zeros(n, nrhs);
        for c in 0..nrhs {
            for i in (0..n).rev() {
                let mut acc = qtb[(i, c)];
                for j in i + 1..n {
                    acc -= self.r[(i, j)] * x[(self.perm[j], c)];
                }
                x[(self.perm[i], c)] = acc / self.r[(i, i)];
            }
        }
        Ok(x)
    }
}

/// Applies `I - 2vvᴴ` to rows `row0..` of `target`, columns `col0..`.
fn apply_reflector(target: &mut ComplexMatrix, v: &[Complex64], row0: usize, col0: usize) {
    let cols = target.cols();
    for c in col0..cols {
        let mut dot = Complex64::new(0.0, 0.0);
        for (i, vi) in v.iter().enumerate() {
            dot += vi.conj() * target[(row0 + i, c)];
        }
        if dot == Complex64::new(0.0, 0.0) {
            continue;
        }
        let dot2 = dot * 2.0;
        for (i, vi) in v.iter().enumerate() {
            target[(row0 + i, c)] -= vi * dot2;
        }
    }
}

/// Minimises `‖A·X − B‖_F` through a pivoted Householder QR of `A`.
///
/// Fails with [`NumericsError::RankDeficient`] when a pivot falls below
/// [`RANK_TOLERANCE`] times the largest one.
pub fn ls_solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
    PivotedQr::new(a)?.solve(b)
}
