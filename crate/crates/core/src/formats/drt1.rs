//! `DRT1` tensor blobs: magic, `u32` rank, `rank × u64` dims, row-major `f64`
//! payload, all little-endian.

use std::io::{Read, Write};

use crate::error::{DripError, Result};

pub const MAGIC: &[u8; 4] = b"DRT1";
/// Rejects headers that would allocate absurd payloads.
const MAX_ELEMENTS: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(DripError::precondition(format!("tensor dims {dims:?} hold {n} values, got {}", data.len())));
        }
        Ok(Self { dims, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.dims.len() + 8 * self.data.len());
        write_tensor(&mut out, self).expect("writing to memory");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let t = read_tensor(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(DripError::Format(format!("{} trailing bytes after tensor", cursor.len())));
        }
        Ok(t)
    }
}

pub(crate) fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => DripError::Format(format!("truncated {what}")),
        _ => DripError::Io(e),
    })
}

pub(crate) fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

pub fn write_tensor<W: Write>(w: &mut W, t: &Tensor) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(t.dims.len() as u32).to_le_bytes())?;
    for &d in &t.dims {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in &t.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic, "tensor magic")?;
    if &magic != MAGIC {
        return Err(DripError::Format(format!("bad tensor magic {magic:?}")));
    }
    let rank = read_u32(r, "tensor rank")? as usize;
    let mut dims = Vec::with_capacity(rank.min(16));
    let mut count: u64 = 1;
    for _ in 0..rank {
        let mut b = [0u8; 8];
        read_exact(r, &mut b, "tensor dims")?;
        let d = u64::from_le_bytes(b);
        count = count
            .checked_mul(d)
            .filter(|&c| c <= MAX_ELEMENTS)
            .ok_or_else(|| DripError::Format("tensor too large".into()))?;
        dims.push(d as usize);
    }
    let mut data = Vec::with_capacity(count as usize);
    let mut b = [0u8; 8];
    for _ in 0..count {
        read_exact(r, &mut b, "tensor payload")?;
        data.push(f64::from_le_bytes(b));
    }
    Ok(Tensor { dims, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let t = Tensor::new(vec![2], vec![1.0, -0.5]).unwrap();
        let b = t.to_bytes();
        assert_eq!(&b[..4], b"DRT1");
        assert_eq!(&b[4..8], &1u32.to_le_bytes());
        assert_eq!(&b[8..16], &2u64.to_le_bytes());
        assert_eq!(&b[16..24], &1.0f64.to_le_bytes());
        assert_eq!(b.len(), 32);
    }

    #[test]
    fn truncated_rejected() {
        let b = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap().to_bytes();
        assert!(matches!(Tensor::from_bytes(&b[..b.len() - 1]), Err(DripError::Format(_))));
        assert!(Tensor::from_bytes(b"DRT2").is_err());
    }

    #[test]
    fn scalar_rank_zero() {
        let t = Tensor::new(vec![], vec![4.0]).unwrap();
        assert_eq!(Tensor::from_bytes(&t.to_bytes()).unwrap(), t);
    }
}
