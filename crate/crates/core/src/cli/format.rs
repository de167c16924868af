//! Binary containers shared across subcommands. Layouts are frozen in FORMATS.md.

use crate::error::{Error, Result};
use crate::net::{LayerMask, Mask};

pub const MASK_MAGIC: &[u8; 4] = b"GPMK";
pub const MASK_VERSION: u16 = 1;

/// Little-endian cursor over a byte slice; truncation surfaces as `LengthMismatch`.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::LengthMismatch { expected: self.pos.saturating_add(n), found: self.bytes.len() }),
        }
    }

    pub(crate) fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != magic {
            return Err(Error::Format(format!(
                "expected magic {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(got)
            )));
        }
        Ok(())
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    pub(crate) fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::LengthMismatch { expected: self.pos, found: self.bytes.len() });
        }
        Ok(())
    }
}

pub(crate) fn check_version(found: u16, supported: u16, what: &str) -> Result<()> {
    if found != supported {
        return Err(Error::Format(format!("{what} version {found} is not supported (expected {supported})")));
    }
    Ok(())
}

/// Serializes a mask: header, per-layer shape, recorded sparsity and MSB-first
/// packed bits, then a CRC32 of everything before it.
pub fn encode_mask(mask: &Mask) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MASK_MAGIC);
    out.extend_from_slice(&MASK_VERSION.to_le_bytes());
    out.extend_from_slice(&(mask.len() as u16).to_le_bytes());
    for layer in mask.layers() {
        out.extend_from_slice(&(layer.n_out() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.n_in() as u32).to_le_bytes());
        out.extend_from_slice(&layer.recorded_sparsity().to_le_bytes());
        for chunk in layer.bits().chunks(8) {
            let mut byte = 0u8;
            for (k, &b) in chunk.iter().enumerate() {
                if b {
                    byte |= 0x80 >> k;
                }
            }
            out.push(byte);
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn save_mask(mask: &Mask, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, encode_mask(mask))?;
    Ok(())
}

pub fn load_mask(path: &std::path::Path) -> Result<Mask> {
    decode_mask(&std::fs::read(path)?)
}

pub fn decode_mask(bytes: &[u8]) -> Result<Mask> {
    let (mask, used) = decode_mask_prefix(bytes)?;
    if used != bytes.len() {
        return Err(Error::LengthMismatch { expected: used, found: bytes.len() });
    }
    Ok(mask)
}

/// Decodes a mask at the start of `bytes`; returns it with the number of bytes consumed.
pub(crate) fn decode_mask_prefix(bytes: &[u8]) -> Result<(Mask, usize)> {
    let mut r = Reader::new(bytes);
    r.magic(MASK_MAGIC)?;
    check_version(r.u16()?, MASK_VERSION, "mask file")?;
    let count = r.u16()? as usize;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let n_out = r.u32()? as usize;
        let n_in = r.u32()? as usize;
        let sparsity = r.f64()?;
        let entries = n_out * n_in;
        let packed = r.take(entries.div_ceil(8))?;
        let mut bits = Vec::with_capacity(entries);
        for idx in 0..entries {
            bits.push(packed[idx / 8] & (0x80 >> (idx % 8)) != 0);
        }
        if !entries.is_multiple_of(8) && packed[entries / 8] & (0xffu8 >> (entries % 8)) != 0 {
            return Err(Error::Format("non-zero padding bits in mask layer".into()));
        }
        layers.push(LayerMask::from_bits(n_out, n_in, bits)?.with_recorded_sparsity(sparsity));
    }
    let body = r.position();
    let stored = r.u32()?;
    let computed = crc32fast::hash(&bytes[..body]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    Ok((Mask::new(layers), r.position()))
}
