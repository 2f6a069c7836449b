//! Binary checkpoint layout (all little-endian):
//!
//! ```text
//! magic  "RISCKPT1"          8 bytes
//! version                    u32 (= 1)
//! M, N, K, S                 4 × u32
//! dtype                      u8 (1 = f64) + 3 padding bytes
//! normalisation constant c   f64
//! tensor count               u32
//! per tensor:
//!   name                     u32 length + UTF-8 bytes
//!   rows, cols               2 × u32
//!   has_mask                 u8
//!   mask bitmap              ⌈rows·cols/8⌉ bytes, LSB-first, if has_mask
//!   values                   rows·cols × f64, row-major
//! ```

use std::io::{Read, Write};

use super::mask::SparseMask;
use super::model::{Dims, SclstmParams};
use crate::format::{BinReader, BinWriter, FormatError};

const MAGIC: &[u8; 8] = b"RISCKPT1";
const VERSION: u32 = 1;
const DTYPE_F64: u8 = 1;

/// Trained parameters together with the input scaling they expect.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: SclstmParams,
    /// Inputs and targets were multiplied by this before training.
    pub scale: f64,
}

fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

fn unpack_bits(bytes: &[u8], count: usize) -> Vec<bool> {
    (0..count).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect()
}

impl Checkpoint {
    pub fn write<W: Write>(&self, out: W) -> Result<(), FormatError> {
        let p = &self.params;
        let mut w = BinWriter::new(out);
        w.bytes(MAGIC)?;
        w.u32(VERSION)?;
        for d in [p.dims.antennas, p.dims.elements, p.dims.users, p.dims.window] {
            w.len(d)?;
        }
        w.u8(DTYPE_F64)?;
        w.bytes(&[0; 3])?;
        w.f64(self.scale)?;
        let tensors = p.tensors();
        w.len(tensors.len())?;
        for (name, [rows, cols], data) in tensors {
            w.string(name)?;
            w.len(rows)?;
            w.len(cols)?;
            let mask = match name {
                "g_layer.weight" => Some(&p.g_layer.mask),
                "h_layer.weight" => Some(&p.h_layer.mask),
                _ => None,
            };
            match mask {
                Some(m) => {
                    w.u8(1)?;
                    w.bytes(&pack_bits(m.bitmap()))?;
                }
                None => w.u8(0)?,
            }
            for &v in data {
                w.f64(v)?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory cannot fail");
        buf
    }

    pub fn read<R: Read>(input: R) -> Result<Self, FormatError> {
        let mut r = BinReader::new(input);
        r.magic(MAGIC)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let m = r.len()?;
        let n = r.len()?;
        let k = r.len()?;
        let s = r.len()?;
        if [m, n, k, s].contains(&0) || m * n > 1 << 20 {
            return Err(FormatError::Corrupt(format!("implausible dimensions {m}x{n}, K={k}, S={s}")));
        }
        let dtype = r.u8()?;
        if dtype != DTYPE_F64 {
            return Err(FormatError::Corrupt(format!("unsupported dtype {dtype}")));
        }
        r.bytes(3)?;
        let scale = r.f64()?;
        let mut params = SclstmParams::zeros(Dims::new(m, n, k, s));
        let expected: Vec<(&str, [usize; 2])> = params.tensors().iter().map(|(nm, sh, _)| (*nm, *sh)).collect();
        let count = r.len()?;
        if count != expected.len() {
            return Err(FormatError::Corrupt(format!("expected {} tensors, found {count}", expected.len())));
        }
        let reference_masks = [params.g_layer.mask.clone(), params.h_layer.mask.clone()];
        let mut values = Vec::with_capacity(count);
        for (name, shape) in &expected {
            let found = r.string()?;
            if found != *name {
                return Err(FormatError::Corrupt(format!("expected tensor `{name}`, found `{found}`")));
            }
            let rows = r.len()?;
            let cols = r.len()?;
            if [rows, cols] != *shape {
                return Err(FormatError::Corrupt(format!("tensor `{name}` has shape {rows}x{cols}, expected {shape:?}")));
            }
            let has_mask = r.u8()?;
            if has_mask == 1 {
                let bits = unpack_bits(&r.bytes((rows * cols).div_ceil(8))?, rows * cols);
                let mask = SparseMask::from_bitmap(rows, cols, bits);
                let want = if *name == "g_layer.weight" { &reference_masks[0] } else { &reference_masks[1] };
                if &mask != want {
                    return Err(FormatError::Corrupt(format!("mask of `{name}` does not match the architecture")));
                }
            } else if has_mask != 0 {
                return Err(FormatError::Corrupt(format!("bad mask flag {has_mask}")));
            }
            let data = (0..rows * cols).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
            values.push(data);
        }
        for (dst, src) in params.tensors_mut().into_iter().zip(values) {
            dst.copy_from_slice(&src);
        }
        if params.g_layer.mask_violation().is_some() || params.h_layer.mask_violation().is_some() {
            return Err(FormatError::Corrupt("weights outside the sparse masks".into()));
        }
        Ok(Self { params, scale })
    }
}
