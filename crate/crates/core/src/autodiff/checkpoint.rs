//! Flat binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "CPLW1"                 5 bytes magic
//! tensor count            u32
//! per tensor:
//!   rows, cols            u32, u32
//!   rows*cols values      f64, row-major
//! ```

use std::io::{Read, Write};

use super::graph::Matrix;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"CPLW1";

pub fn write_tensors<W: Write>(mut out: W, tensors: &[&Matrix]) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&u32_len(tensors.len())?.to_le_bytes())?;
    for t in tensors {
        let (rows, cols) = t.dim();
        out.write_all(&u32_len(rows)?.to_le_bytes())?;
        out.write_all(&u32_len(cols)?.to_le_bytes())?;
        for v in t.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_tensors<R: Read>(mut input: R) -> Result<Vec<Matrix>> {
    let mut magic = [0u8; 5];
    input
        .read_exact(&mut magic)
        .map_err(|e| Error::format("checkpoint", format!("missing header: {e}")))?;
    if &magic != MAGIC {
        return Err(Error::format(
            "checkpoint",
            format!("bad magic {:?}", String::from_utf8_lossy(&magic)),
        ));
    }
    let count = read_u32(&mut input)? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let rows = read_u32(&mut input)? as usize;
        let cols = read_u32(&mut input)? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        let mut buf = [0u8; 8];
        for _ in 0..rows * cols {
            input
                .read_exact(&mut buf)
                .map_err(|e| Error::format("checkpoint", format!("tensor {i} truncated: {e}")))?;
            data.push(f64::from_le_bytes(buf));
        }
        let m = Matrix::from_shape_vec((rows, cols), data)
            .map_err(|e| Error::format("checkpoint", e.to_string()))?;
        tensors.push(m);
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(Error::format(
            "checkpoint",
            "trailing bytes after last tensor",
        ));
    }
    Ok(tensors)
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    input
        .read_exact(&mut buf)
        .map_err(|e| Error::format("checkpoint", format!("truncated: {e}")))?;
    Ok(u32::from_le_bytes(buf))
}

fn u32_len(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::invalid(format!("{n} does not fit a u32 field")))
}
