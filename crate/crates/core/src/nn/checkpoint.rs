//! Binary tensor checkpoints.
//!
//! Layout: the magic `FGS1`, then for each tensor a little-endian `u32`
//! name length, the UTF-8 name, `u32` rows, `u32` cols, and `rows * cols`
//! little-endian `f64` values in row-major order. Tensors run to end of file.

use std::io::{ErrorKind, Read, Write};

use super::{Matrix, NnError};

pub const MAGIC: &[u8; 4] = b"FGS1";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub value: Matrix,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, value: Matrix) -> Self {
        Self {
            name: name.into(),
            value,
        }
    }
}

fn io_err(e: std::io::Error) -> NnError {
    NnError::Checkpoint(e.to_string())
}

fn to_u32(n: usize, what: &str) -> Result<u32, NnError> {
    u32::try_from(n).map_err(|_| NnError::Checkpoint(format!("{what} {n} exceeds u32")))
}

pub fn write_checkpoint(tensors: &[NamedTensor], mut out: impl Write) -> Result<(), NnError> {
    out.write_all(MAGIC).map_err(io_err)?;
    for t in tensors {
        let name = t.name.as_bytes();
        out.write_all(&to_u32(name.len(), "name length")?.to_le_bytes())
            .map_err(io_err)?;
        out.write_all(name).map_err(io_err)?;
        out.write_all(&to_u32(t.value.rows(), "rows")?.to_le_bytes())
            .map_err(io_err)?;
        out.write_all(&to_u32(t.value.cols(), "cols")?.to_le_bytes())
            .map_err(io_err)?;
        for v in t.value.data() {
            out.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    Ok(())
}

/// Reads a `u32`, returning `None` on a clean end of input.
fn read_u32_or_eof(input: &mut impl Read) -> Result<Option<u32>, NnError> {
    let mut buf = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match input.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(NnError::Checkpoint("truncated tensor header".into())),
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(io_err(e)),
        }
    }
    Ok(Some(u32::from_le_bytes(buf)))
}

fn read_exact(input: &mut impl Read, buf: &mut [u8], what: &str) -> Result<(), NnError> {
    input.read_exact(buf).map_err(|e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            NnError::Checkpoint(format!("truncated {what}"))
        } else {
            io_err(e)
        }
    })
}

pub fn read_checkpoint(mut input: impl Read) -> Result<Vec<NamedTensor>, NnError> {
    let mut magic = [0u8; 4];
    read_exact(&mut input, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let mut tensors = Vec::new();
    while let Some(name_len) = read_u32_or_eof(&mut input)? {
        let mut name = vec![0u8; name_len as usize];
        read_exact(&mut input, &mut name, "tensor name")?;
        let name = String::from_utf8(name)
            .map_err(|_| NnError::Checkpoint("tensor name is not UTF-8".into()))?;
        let mut dims = [0u8; 8];
        read_exact(&mut input, &mut dims, "tensor shape")?;
        let rows = u32::from_le_bytes(dims[..4].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(dims[4..].try_into().unwrap()) as usize;
        let mut raw = vec![0u8; rows * cols * 8];
        read_exact(&mut input, &mut raw, "tensor data")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(NamedTensor::new(name, Matrix::new(rows, cols, data)?));
    }
    Ok(tensors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let tensors = vec![
            NamedTensor::new("emb", Matrix::new(2, 3, vec![1.0, -2.5, 0.0, 1e-300, f64::MAX, 3.0]).unwrap()),
            NamedTensor::new("head.0.b", Matrix::new(1, 2, vec![0.25, -0.0]).unwrap()),
            NamedTensor::new("empty", Matrix::zeros(0, 4)),
        ];
        let mut buf = Vec::new();
        write_checkpoint(&tensors, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"FGS1");
        assert_eq!(&buf[4..8], &3u32.to_le_bytes());
        assert_eq!(read_checkpoint(buf.as_slice()).unwrap(), tensors);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_checkpoint(&b"XXXX"[..]).is_err());
        let mut buf = Vec::new();
        write_checkpoint(&[NamedTensor::new("w", Matrix::identity(2))], &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert_eq!(
            read_checkpoint(buf.as_slice()),
            Err(NnError::Checkpoint("truncated tensor data".into()))
        );
        assert_eq!(read_checkpoint(&b"FGS1"[..]).unwrap(), vec![]);
        assert!(read_checkpoint(&b"FGS1\x01\x00"[..]).is_err());
    }
}
