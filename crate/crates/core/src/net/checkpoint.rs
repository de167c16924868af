use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::mlp::MaskedMlp;
use crate::cli::format::{check_version, decode_mask_prefix, encode_mask, Reader};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GPNN";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Weights, widths and mask. Optimizer state is not stored.
pub fn encode_checkpoint(net: &MaskedMlp) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(net.widths().len() as u32).to_le_bytes());
    for &w in net.widths() {
        out.extend_from_slice(&(w as u32).to_le_bytes());
    }
    out.extend_from_slice(&net.sigma_w2().to_le_bytes());
    for w in net.weights() {
        for v in w.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&encode_mask(net.mask()));
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<MaskedMlp> {
    let mut r = Reader::new(bytes);
    r.magic(CHECKPOINT_MAGIC)?;
    check_version(r.u16()?, CHECKPOINT_VERSION, "checkpoint")?;
    let n = r.u32()? as usize;
    if !(2..=64).contains(&n) {
        return Err(Error::Format(format!("checkpoint lists {n} widths")));
    }
    let widths = (0..n).map(|_| r.u32().map(|w| w as usize)).collect::<Result<Vec<_>>>()?;
    let sigma_w2 = r.f64()?;
    let mut weights = Vec::with_capacity(n - 1);
    for pair in widths.windows(2) {
        let raw = r.take(pair[0] * pair[1] * 8)?;
        let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        weights.push(Array2::from_shape_vec((pair[1], pair[0]), values).map_err(|e| Error::Shape(e.to_string()))?);
    }
    let (mask, used) = decode_mask_prefix(r.rest())?;
    if used != r.rest().len() {
        return Err(Error::LengthMismatch { expected: r.position() + used, found: bytes.len() });
    }
    for (w, m) in weights.iter().zip(mask.layers()) {
        if w.iter().zip(m.bits()).any(|(&v, &keep)| !keep && v != 0.0) {
            return Err(Error::Format("checkpoint has nonzero weights outside its mask".into()));
        }
    }
    MaskedMlp::from_parts(&widths, weights, mask, sigma_w2)
}

pub fn save_checkpoint(net: &MaskedMlp, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(net))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<MaskedMlp> {
    decode_checkpoint(&fs::read(path)?)
}
