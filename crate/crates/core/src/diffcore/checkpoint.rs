//! `HCPT` parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic  "HCPT"
//! version u16
//! count   u32
//! count × { name_len u16, name bytes, ndim u16, dims u32 × ndim, f64 × numel }
//! ```

use std::io::{Read, Write};

use super::{Tensor, TensorError};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HCPT";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn write_checkpoint<W: Write>(
    mut out: W,
    tensors: &[(String, Tensor<f64>)],
) -> Result<(), TensorError> {
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let count =
        u32::try_from(tensors.len()).map_err(|_| TensorError::Format("too many tensors".into()))?;
    out.write_all(&count.to_le_bytes())?;
    for (name, tensor) in tensors {
        let name_len = u16::try_from(name.len())
            .map_err(|_| TensorError::Format(format!("tensor name too long: {name}")))?;
        out.write_all(&name_len.to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        let ndim = u16::try_from(tensor.ndim())
            .map_err(|_| TensorError::Format("too many dimensions".into()))?;
        out.write_all(&ndim.to_le_bytes())?;
        for &d in tensor.shape() {
            let d = u32::try_from(d)
                .map_err(|_| TensorError::Format(format!("dimension {d} exceeds u32")))?;
            out.write_all(&d.to_le_bytes())?;
        }
        for v in tensor.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Vec<(String, Tensor<f64>)>, TensorError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    if cur.take(4)? != CHECKPOINT_MAGIC {
        return Err(TensorError::Format("bad magic, expected HCPT".into()));
    }
    let version = cur.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(TensorError::Format(format!(
            "unsupported version {version}"
        )));
    }
    let count = cur.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name_len = cur.u16()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| TensorError::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let ndim = cur.u16()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(cur.u32()? as usize);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| TensorError::Format(format!("dimension overflow in `{name}`")))?;
        let payload = cur.take(
            numel
                .checked_mul(8)
                .ok_or_else(|| TensorError::Format("payload size overflow".into()))?,
        )?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let tensor = Tensor::new(&shape, data)
            .map_err(|e| TensorError::Format(format!("tensor `{name}`: {e}")))?;
        out.push((name, tensor));
    }
    if cur.pos != bytes.len() {
        return Err(TensorError::Format(
            "trailing bytes after last tensor".into(),
        ));
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TensorError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| TensorError::Format("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, TensorError> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<u32, TensorError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_exact() {
        let t = Tensor::from_f64(&[1, 2], &[1.0, -0.5]).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &[("w".into(), t.clone())]).unwrap();
        // 4 magic + 2 version + 4 count + 2 name_len + 1 name + 2 ndim + 8 dims + 16 payload
        assert_eq!(buf.len(), 39);
        assert_eq!(&buf[..4], b"HCPT");
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, vec![("w".to_string(), t)]);
    }

    #[test]
    fn truncated_checkpoint_is_an_error() {
        let t = Tensor::from_f64(&[3], &[1.0, 2.0, 3.0]).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &[("w".into(), t)]).unwrap();
        buf.pop();
        assert!(read_checkpoint(buf.as_slice()).is_err());
    }
}
