use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ComplexMatrix, NumericsError};

/// Seeded, splittable random stream.
///
/// ChaCha8 output is specified bit-for-bit, so a given seed yields the same
/// samples on every platform. [`SimRng::split`] derives child streams from
/// the seed alone (never from consumed state), which lets independent
/// episodes or trials be generated in any order or in parallel.
#[derive(Debug, Clone)]
pub struct SimRng {
    seed: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream identified by `tag`; independent of how much of `self`
    /// has been consumed.
    pub fn split(&self, tag: u64) -> SimRng {
        SimRng::new(splitmix64(self.seed ^ splitmix64(tag.wrapping_add(0x5851_F42D_4C95_7F2D))))
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// One `CN(0, variance)` draw.
    pub fn complex_normal(&mut self, variance: f64) -> Complex64 {
        let s = (variance / 2.0).sqrt();
        let re = self.standard_normal();
        let im = self.standard_normal();
        Complex64::new(re * s, im * s)
    }

    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        (self.uniform() * n as f64) as usize % n
    }
}

impl RngCore for SimRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
}

/// Matrix of i.i.d. circularly-symmetric complex Gaussian entries with
/// per-entry variance `variance` (each real component carries half).
pub fn sample_cn(
    rows: usize,
    cols: usize,
    variance: f64,
    rng: &mut SimRng,
) -> Result<ComplexMatrix, NumericsError> {
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(NumericsError::Domain(format!(
            "variance must be finite and non-negative, got {variance}"
        )));
    }
    if rows == 0 || cols == 0 {
        return Err(NumericsError::InvalidDimension(format!(
            "sample shape {rows}x{cols} is empty"
        )));
    }
    if variance == 0.0 {
        return Ok(ComplexMatrix::zeros(rows, cols));
    }
    let data = (0..rows * cols).map(|_| rng.complex_normal(variance)).collect();
    ComplexMatrix::new(rows, cols, data)
}
