//! IDX tensors (the MNIST container format), unsigned-byte payloads only.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};

const TYPE_U8: u8 = 0x08;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxTensor {
    pub fn new(dims: Vec<usize>, data: Vec<u8>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!("dims {dims:?} need {expected} elements, got {}", data.len())));
        }
        Ok(Self { dims, data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of items along the first axis.
    pub fn items(&self) -> usize {
        self.dims.first().copied().unwrap_or(0)
    }

    /// Elements per item (product of the trailing dims).
    pub fn item_len(&self) -> usize {
        self.dims.iter().skip(1).product()
    }
}

/// Parses an IDX byte stream. Gzip input (leading `1f 8b`) is inflated first.
pub fn load_idx(bytes: &[u8]) -> Result<IdxTensor> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut raw = Vec::new();
        GzDecoder::new(bytes).read_to_end(&mut raw)?;
        return parse(&raw);
    }
    parse(bytes)
}

pub fn read_idx_file(path: &Path) -> Result<IdxTensor> {
    let bytes = fs::read(path)?;
    load_idx(&bytes)
}

fn parse(bytes: &[u8]) -> Result<IdxTensor> {
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::Format("IDX stream must start with two zero bytes".into()));
    }
    if bytes[2] != TYPE_U8 {
        return Err(Error::UnsupportedType(bytes[2]));
    }
    let rank = bytes[3] as usize;
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::LengthMismatch { expected: header, found: bytes.len() });
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count: usize = dims.iter().product();
    let expected = header + count;
    if bytes.len() != expected {
        return Err(Error::LengthMismatch { expected, found: bytes.len() });
    }
    Ok(IdxTensor { dims, data: bytes[header..].to_vec() })
}

pub fn write_idx(tensor: &IdxTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * tensor.dims.len() + tensor.data.len());
    out.extend_from_slice(&[0, 0, TYPE_U8, tensor.dims.len() as u8]);
    for &d in &tensor.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&tensor.data);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::{write::GzEncoder, Compression};
    use proptest::prelude::*;
    use std::io::Write;

    #[test]
    fn minimal_label_file() {
        let t = load_idx(&[0, 0, 8, 1, 0, 0, 0, 2, 5, 9]).unwrap();
        assert_eq!(t.dims, vec![2]);
        assert_eq!(t.data, vec![5, 9]);
    }

    #[test]
    fn minimal_image_file() {
        let bytes = [0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 1, 2, 3, 4];
        let t = load_idx(&bytes).unwrap();
        assert_eq!(t.dims, vec![1, 2, 2]);
        assert_eq!(t.data, vec![1, 2, 3, 4]);
        assert_eq!(t.item_len(), 4);
    }

    #[test]
    fn errors() {
        assert!(matches!(load_idx(&[1, 0, 8, 1, 0, 0, 0, 0]), Err(Error::Format(_))));
        assert!(matches!(load_idx(&[0, 0, 0x0d, 1, 0, 0, 0, 0]), Err(Error::UnsupportedType(0x0d))));
        assert!(matches!(
            load_idx(&[0, 0, 8, 1, 0, 0, 0, 3, 1, 2]),
            Err(Error::LengthMismatch { expected: 11, found: 10 })
        ));
        assert!(matches!(load_idx(&[0, 0, 8, 2, 0, 0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn gzip_is_detected() {
        let plain = write_idx(&IdxTensor::new(vec![3], vec![7, 8, 9]).unwrap());
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&plain).unwrap();
        let gz = enc.finish().unwrap();
        assert_eq!(load_idx(&gz).unwrap().data, vec![7, 8, 9]);
    }

    proptest! {
        #[test]
        fn write_then_load_is_identity(dims in prop::collection::vec(1usize..5, 1..4), seed in any::<u8>()) {
            let n: usize = dims.iter().product();
            let data: Vec<u8> = (0..n).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect();
            let t = IdxTensor::new(dims, data).unwrap();
            prop_assert_eq!(load_idx(&write_idx(&t)).unwrap(), t);
        }
    }
}
