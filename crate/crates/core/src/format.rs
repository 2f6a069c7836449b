//! Little-endian primitives shared by the binary episode, dataset and
//! checkpoint formats.

use std::io::{self, Read, Write};

use num_complex::Complex64;
use thiserror::Error;

use crate::numerics::ComplexMatrix;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 8], found: [u8; 8] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt file: {0}")]
    Corrupt(String),
}

pub struct BinWriter<W: Write> {
    inner: W,
}

impl<W: Write> BinWriter<W> {
    pub fn new(inner: W) -> Self {
        Self { inner }
    }

    pub fn into_inner(self) -> W {
        self.inner
    }

    pub fn bytes(&mut self, b: &[u8]) -> io::Result<()> {
        self.inner.write_all(b)
    }

    pub fn u8(&mut self, v: u8) -> io::Result<()> {
        self.inner.write_all(&[v])
    }

    pub fn u32(&mut self, v: u32) -> io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }

    pub fn u64(&mut self, v: u64) -> io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }

    pub fn f64(&mut self, v: f64) -> io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }

    pub fn len(&mut self, v: usize) -> io::Result<()> {
        let v = u32::try_from(v).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "length exceeds u32"))?;
        self.u32(v)
    }

    pub fn complex(&mut self, z: Complex64) -> io::Result<()> {
        self.f64(z.re)?;
        self.f64(z.im)
    }

    /// Interleaved `(re, im)` entries in row-major order; the shape is
    /// implied by the surrounding header.
    pub fn matrix_entries(&mut self, m: &ComplexMatrix) -> io::Result<()> {
        for &z in m.iter() {
            self.complex(z)?;
        }
        Ok(())
    }

    pub fn string(&mut self, s: &str) -> io::Result<()> {
        self.len(s.len())?;
        self.bytes(s.as_bytes())
    }
}

pub struct BinReader<R: Read> {
    inner: R,
}

impl<R: Read> BinReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner }
    }

    pub fn magic(&mut self, expected: &[u8; 8]) -> Result<(), FormatError> {
        let mut found = [0u8; 8];
        self.inner.read_exact(&mut found)?;
        if &found != expected {
            return Err(FormatError::BadMagic {
                expected: *expected,
                found,
            });
        }
        Ok(())
    }

    pub fn bytes(&mut self, n: usize) -> io::Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf)?;
        Ok(buf)
    }

    pub fn u8(&mut self) -> io::Result<u8> {
        let mut b = [0u8; 1];
        self.inner.read_exact(&mut b)?;
        Ok(b[0])
    }

    pub fn u32(&mut self) -> io::Result<u32> {
        let mut b = [0u8; 4];
        self.inner.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    pub fn u64(&mut self) -> io::Result<u64> {
        let mut b = [0u8; 8];
        self.inner.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    pub fn f64(&mut self) -> io::Result<f64> {
        let mut b = [0u8; 8];
        self.inner.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    pub fn len(&mut self) -> io::Result<usize> {
        Ok(self.u32()? as usize)
    }

    pub fn complex(&mut self) -> io::Result<Complex64> {
        let re = self.f64()?;
        let im = self.f64()?;
        Ok(Complex64::new(re, im))
    }

    pub fn matrix(&mut self, rows: usize, cols: usize) -> Result<ComplexMatrix, FormatError> {
        let data = (0..rows * cols)
            .map(|_| self.complex())
            .collect::<io::Result<Vec<_>>>()?;
        ComplexMatrix::new(rows, cols, data).map_err(|e| FormatError::Corrupt(e.to_string()))
    }

    pub fn string(&mut self) -> Result<String, FormatError> {
        let n = self.len()?;
        if n > 1 << 20 {
            return Err(FormatError::Corrupt(format!("string length {n} is implausible")));
        }
        String::from_utf8(self.bytes(n)?).map_err(|e| FormatError::Corrupt(e.to_string()))
    }
}
