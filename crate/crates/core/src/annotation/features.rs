//! The `HCFT` feature file: magic `HCFT`, `u16` version, `u8` dtype
//! (0 = f32, 1 = f64), `u16` rank, `u32` extents, then the row-major
//! little-endian payload. Everything is little-endian.

use std::io::{Read, Write};
use std::path::Path;

use super::AnnotationError;
use crate::diffcore::Tensor;
use crate::scalar::Scalar;

pub const FEATURE_MAGIC: &[u8; 4] = b"HCFT";
pub const FEATURE_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum FeatureData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl FeatureData {
    pub fn len(&self) -> usize {
        match self {
            Self::F32(v) => v.len(),
            Self::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dtype(&self) -> u8 {
        match self {
            Self::F32(_) => 0,
            Self::F64(_) => 1,
        }
    }

    fn width(dtype: u8) -> usize {
        if dtype == 0 {
            4
        } else {
            8
        }
    }
}

/// A feature array as stored on disk. Extents may be zero (a video without
/// tracked persons).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureArray {
    pub shape: Vec<usize>,
    pub data: FeatureData,
}

impl FeatureArray {
    pub fn new(shape: Vec<usize>, data: FeatureData) -> Result<Self, AnnotationError> {
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| AnnotationError::Format("element count overflows".into()))?;
        if n != data.len() {
            return Err(AnnotationError::Format(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_tensor_f32<S: Scalar>(t: &Tensor<S>) -> Self {
        let data = t.data().iter().map(|v| v.to_f64_lossy() as f32).collect();
        Self {
            shape: t.shape().to_vec(),
            data: FeatureData::F32(data),
        }
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Row `i` of a rank-2 array as `S`.
    pub fn row<S: Scalar>(&self, i: usize) -> Vec<S> {
        let c = self.shape[1];
        match &self.data {
            FeatureData::F32(v) => v[i * c..(i + 1) * c]
                .iter()
                .map(|&x| S::from_f64_lossy(f64::from(x)))
                .collect(),
            FeatureData::F64(v) => v[i * c..(i + 1) * c]
                .iter()
                .map(|&x| S::from_f64_lossy(x))
                .collect(),
        }
    }

    /// Converts to a tensor; fails on zero extents, which tensors forbid.
    pub fn to_tensor<S: Scalar>(&self) -> Result<Tensor<S>, AnnotationError> {
        let data = match &self.data {
            FeatureData::F32(v) => v.iter().map(|&x| S::from_f64_lossy(f64::from(x))).collect(),
            FeatureData::F64(v) => v.iter().map(|&x| S::from_f64_lossy(x)).collect(),
        };
        Tensor::new(&self.shape, data).map_err(|e| AnnotationError::Format(e.to_string()))
    }
}

pub fn write_features_to<W: Write>(mut w: W, array: &FeatureArray) -> Result<(), AnnotationError> {
    let io = |source| AnnotationError::Io {
        path: "<feature stream>".into(),
        source,
    };
    let mut header = Vec::with_capacity(9 + 4 * array.shape.len());
    header.extend_from_slice(FEATURE_MAGIC);
    header.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    header.push(array.data.dtype());
    let rank = u16::try_from(array.shape.len())
        .map_err(|_| AnnotationError::Format("rank exceeds u16".into()))?;
    header.extend_from_slice(&rank.to_le_bytes());
    for &d in &array.shape {
        let d = u32::try_from(d)
            .map_err(|_| AnnotationError::Format(format!("extent {d} exceeds u32")))?;
        header.extend_from_slice(&d.to_le_bytes());
    }
    let mut payload = Vec::with_capacity(array.data.len() * 8);
    match &array.data {
        FeatureData::F32(v) => v
            .iter()
            .for_each(|x| payload.extend_from_slice(&x.to_le_bytes())),
        FeatureData::F64(v) => v
            .iter()
            .for_each(|x| payload.extend_from_slice(&x.to_le_bytes())),
    }
    w.write_all(&header).map_err(io)?;
    w.write_all(&payload).map_err(io)
}

pub fn read_features_from<R: Read>(mut r: R) -> Result<FeatureArray, AnnotationError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|source| AnnotationError::Io {
            path: "<feature stream>".into(),
            source,
        })?;
    decode(&bytes)
}

fn decode(bytes: &[u8]) -> Result<FeatureArray, AnnotationError> {
    let fail = |m: &str| AnnotationError::Format(m.to_string());
    let take = |at: usize, n: usize| {
        bytes
            .get(at..at + n)
            .ok_or_else(|| fail("truncated header"))
    };
    if take(0, 4)? != FEATURE_MAGIC {
        return Err(fail("bad magic, expected HCFT"));
    }
    let version = u16::from_le_bytes(take(4, 2)?.try_into().expect("2 bytes"));
    if version != FEATURE_VERSION {
        return Err(AnnotationError::Format(format!(
            "unsupported version {version}"
        )));
    }
    let dtype = take(6, 1)?[0];
    if dtype > 1 {
        return Err(AnnotationError::Format(format!(
            "unknown dtype code {dtype}"
        )));
    }
    let rank = u16::from_le_bytes(take(7, 2)?.try_into().expect("2 bytes")) as usize;
    let mut shape = Vec::with_capacity(rank);
    for i in 0..rank {
        let d = u32::from_le_bytes(take(9 + 4 * i, 4)?.try_into().expect("4 bytes"));
        shape.push(d as usize);
    }
    let header = 9 + 4 * rank;
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| fail("dimension overflow"))?;
    let width = FeatureData::width(dtype);
    let expected = count
        .checked_mul(width)
        .and_then(|n| n.checked_add(header))
        .ok_or_else(|| fail("dimension overflow"))?;
    if bytes.len() != expected {
        return Err(AnnotationError::Format(format!(
            "payload is {} bytes, header declares {}",
            bytes.len() - header.min(bytes.len()),
            expected - header
        )));
    }
    let payload = &bytes[header..];
    let data = if dtype == 0 {
        FeatureData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect(),
        )
    } else {
        FeatureData::F64(
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        )
    };
    Ok(FeatureArray { shape, data })
}

pub fn write_features(path: &Path, array: &FeatureArray) -> Result<(), AnnotationError> {
    let mut buf = Vec::new();
    write_features_to(&mut buf, array)?;
    std::fs::write(path, buf).map_err(|source| AnnotationError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_features(path: &Path) -> Result<FeatureArray, AnnotationError> {
    let bytes = std::fs::read(path).map_err(|source| AnnotationError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes).map_err(|e| match e {
        AnnotationError::Format(m) => AnnotationError::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encode(a: &FeatureArray) -> Vec<u8> {
        let mut buf = Vec::new();
        write_features_to(&mut buf, a).unwrap();
        buf
    }

    #[test]
    fn header_arithmetic() {
        let a = FeatureArray::new(vec![64, 1024], FeatureData::F32(vec![0.5; 64 * 1024])).unwrap();
        let bytes = encode(&a);
        assert_eq!(bytes.len(), 17 + 64 * 1024 * 4);
        assert_eq!(&bytes[..4], b"HCFT");
        assert_eq!(&bytes[4..9], &[1, 0, 0, 2, 0]);
        assert_eq!(&bytes[9..17], &[64, 0, 0, 0, 0, 4, 0, 0]);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let v = vec![1.5f64, -0.0, f64::MIN_POSITIVE, 1e300, -7.25, 0.1];
        let a = FeatureArray::new(vec![2, 3], FeatureData::F64(v)).unwrap();
        let back = read_features_from(encode(&a).as_slice()).unwrap();
        match (&a.data, &back.data) {
            (FeatureData::F64(x), FeatureData::F64(y)) => {
                assert!(x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()))
            }
            _ => panic!("dtype changed"),
        }
        let empty = FeatureArray::new(vec![0, 8], FeatureData::F32(vec![])).unwrap();
        assert_eq!(
            read_features_from(encode(&empty).as_slice()).unwrap(),
            empty
        );
    }

    #[test]
    fn corrupt_files_rejected() {
        let a = FeatureArray::new(vec![3, 2], FeatureData::F32(vec![1.0; 6])).unwrap();
        let bytes = encode(&a);
        assert!(read_features_from(&bytes[..bytes.len() - 1]).is_err());
        assert!(read_features_from(&bytes[..10]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_features_from(bad.as_slice()).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(read_features_from(long.as_slice()).is_err());
        let mut huge = bytes[..9].to_vec();
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(read_features_from(huge.as_slice()).is_err());
    }
}
