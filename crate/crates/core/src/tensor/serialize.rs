//! Flat binary tensor container.
//!
//! One record is laid out as:
//!
//! ```text
//! b"RVT1"                      4 bytes
//! rank                         u64 little-endian
//! extent[0..rank]              u64 little-endian each
//! data[0..product(extents)]    f64 little-endian each, row-major
//! ```
//!
//! Checkpoints concatenate records back to back.

use std::io::{Read, Write};

use super::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RVT1";

// Guards against allocating absurd buffers from corrupt headers.
const MAX_RANK: u64 = 8;

fn io_err(e: std::io::Error) -> Error {
    Error::io("<stream>", e)
}

pub fn write_tensor<W: Write>(out: &mut W, tensor: &Tensor) -> Result<()> {
    out.write_all(MAGIC).map_err(io_err)?;
    out.write_all(&(tensor.rank() as u64).to_le_bytes()).map_err(io_err)?;
    for &d in tensor.shape() {
        out.write_all(&(d as u64).to_le_bytes()).map_err(io_err)?;
    }
    let mut buf = Vec::with_capacity(tensor.len() * 8);
    for v in tensor.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf).map_err(io_err)
}

pub fn write_tensors<'a, W: Write>(
    out: &mut W,
    tensors: impl IntoIterator<Item = &'a Tensor>,
) -> Result<()> {
    for t in tensors {
        write_tensor(out, t)?;
    }
    Ok(())
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b).map_err(io_err)?;
    Ok(u64::from_le_bytes(b))
}

/// Reads one record. Returns `Ok(None)` on a clean end of stream.
pub fn read_tensor<R: Read>(input: &mut R) -> Result<Option<Tensor>> {
    let mut magic = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        let n = input.read(&mut magic[got..]).map_err(io_err)?;
        if n == 0 {
            break;
        }
        got += n;
    }
    if got == 0 {
        return Ok(None);
    }
    if got < 4 || &magic != MAGIC {
        return Err(Error::invalid("read_tensor", "bad magic bytes, expected RVT1"));
    }
    let rank = read_u64(input)?;
    if rank == 0 || rank > MAX_RANK {
        return Err(Error::invalid("read_tensor", format!("unsupported rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank as usize);
    for _ in 0..rank {
        shape.push(read_u64(input)? as usize);
    }
    let n = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::invalid("read_tensor", format!("extents {shape:?} overflow")))?;
    let mut bytes = vec![0u8; n * 8];
    input.read_exact(&mut bytes).map_err(io_err)?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Tensor::new(shape, data).map(Some)
}

pub fn read_tensors<R: Read>(input: &mut R) -> Result<Vec<Tensor>> {
    let mut out = Vec::new();
    while let Some(t) = read_tensor(input)? {
        out.push(t);
    }
    Ok(out)
}
