//! Golden bytes for every on-disk format. The expected byte strings were
//! assembled independently (struct packing plus zlib CRC32), not by this crate.

use gplab::cli::format::{decode_mask, encode_mask};
use gplab::data::{load_idx, write_idx, IdxTensor};
use gplab::experiments::Manifest;
use gplab::graphon::{Provenance, StepGraphon};
use gplab::kernel::KernelMatrix;
use gplab::net::{decode_checkpoint, encode_checkpoint, LayerMask, Mask, MaskedMlp};
use gplab::Error;
use ndarray::array;

const GOLDEN_MASK: &str = "47504d4b010001000200000003000000555555555555d53fb8f2554922";
const GOLDEN_CHECKPOINT: &str = "47504e4e0100020000000200000001000000000000000000f03f000000000000e03f000000000000d0bf\
47504d4b0100010001000000020000000000000000000000c0feea8a25";

fn golden_mask() -> Mask {
    let layer = LayerMask::from_bits(2, 3, vec![true, false, true, true, true, false]).unwrap();
    Mask::new(vec![layer.with_recorded_sparsity(1.0 / 3.0)])
}

#[test]
fn mask_file_golden() {
    let bytes = hex::decode(GOLDEN_MASK).unwrap();
    assert_eq!(encode_mask(&golden_mask()), bytes);
    assert_eq!(decode_mask(&bytes).unwrap(), golden_mask());
    let mut flipped = bytes.clone();
    flipped[24] ^= 0x01;
    assert!(decode_mask(&flipped).is_err(), "padding or CRC corruption is caught");
    let mut bad_crc = bytes.clone();
    *bad_crc.last_mut().unwrap() ^= 0xff;
    assert!(matches!(decode_mask(&bad_crc), Err(Error::Checksum { .. })));
    assert!(matches!(decode_mask(&bytes[..bytes.len() - 1]), Err(Error::LengthMismatch { .. }) | Err(Error::Checksum { .. })));
}

#[test]
fn kernel_file_golden() {
    let k = KernelMatrix::new(array![[2.0, 0.5], [0.5, 1.0]], [7u8; 32], None).unwrap();
    let mut expected = b"GPKM".to_vec();
    expected.extend_from_slice(&2u32.to_le_bytes());
    for v in [2.0f64, 0.5, 1.0] {
        expected.extend_from_slice(&v.to_le_bytes());
    }
    expected.extend_from_slice(&[7u8; 32]);
    assert_eq!(k.encode(), expected);
    let back = KernelMatrix::decode(&expected).unwrap();
    assert_eq!(back.values(), k.values());
    assert_eq!(back.fingerprint(), k.fingerprint());
    assert!(back.kind().is_none());
    assert!(matches!(KernelMatrix::decode(&expected[..20]), Err(Error::LengthMismatch { .. })));
}

#[test]
fn checkpoint_golden() {
    let net = MaskedMlp::from_parts(&[2, 1], vec![array![[0.5, -0.25]]], Mask::dense(&[2, 1]), 1.0).unwrap();
    let bytes = hex::decode(GOLDEN_CHECKPOINT).unwrap();
    assert_eq!(encode_checkpoint(&net), bytes);
    let back = decode_checkpoint(&bytes).unwrap();
    assert_eq!(back.weights(), net.weights());
    assert_eq!(back.mask(), net.mask());
    assert_eq!(back.widths(), net.widths());
}

#[test]
fn graphon_json_golden() {
    let g = StepGraphon::new(2, vec![0.25, 0.5, 0.75, 1.0], Provenance::Estimated).unwrap();
    let text = r#"{"k":2,"grid":[0.25,0.5,0.75,1.0],"provenance":"estimated"}"#;
    assert_eq!(g.to_json(), text);
    assert_eq!(StepGraphon::from_json(text).unwrap(), g);
    assert!(StepGraphon::from_json(r#"{"k":2,"grid":[0.5],"provenance":"specified"}"#).is_err());
    assert!(StepGraphon::from_json(r#"{"k":1,"grid":[1.5],"provenance":"specified"}"#).is_err());
}

#[test]
fn idx_golden() {
    // Two 2x2 images: magic 00 00 08 03, big-endian dims, raw bytes.
    let bytes = [0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 1, 2, 3, 4, 5, 6, 7, 255];
    let t = load_idx(&bytes).unwrap();
    assert_eq!(t, IdxTensor::new(vec![2, 2, 2], vec![1, 2, 3, 4, 5, 6, 7, 255]).unwrap());
    assert_eq!(write_idx(&t), bytes);
    let labels = [0, 0, 8, 1, 0, 0, 0, 3, 9, 0, 4];
    assert_eq!(load_idx(&labels).unwrap().data, vec![9, 0, 4]);
    assert!(matches!(load_idx(&[0, 0, 0x0d, 1, 0, 0, 0, 1, 0, 0, 0, 0]), Err(Error::UnsupportedType(0x0d))));
    assert!(matches!(load_idx(&bytes[..20]), Err(Error::LengthMismatch { .. })));
    assert!(matches!(load_idx(&[1, 0, 8, 1]), Err(Error::Format(_))));
}

#[test]
fn manifest_golden() {
    let dir = tempfile::tempdir().unwrap();
    let m = Manifest::open(dir.path()).unwrap();
    m.complete("cell/a", &[("cells/a.json".into(), b"{}".to_vec())]).unwrap();
    let written: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    let expected = serde_json::json!({
        "cells": {
            "cell/a": {
                "files": ["cells/a.json"],
                "sha256": "44136fa355b3678a1146ad16f7e8649e94fb4fc21fe77e8310c060f61caaff8a"
            }
        }
    });
    assert_eq!(written, expected);
}

#[test]
fn csv_headers_are_frozen() {
    assert_eq!(gplab::spectra::CSV_HEADER, "method,sparsity,width,seed,alpha,eff_rank,gap,energy_top5");
    assert_eq!(gplab::experiments::CONVERGENCE_HEADER, "method,sparsity,layer,width,distance");
    assert_eq!(gplab::experiments::TRACES_HEADER, "method,sparsity,width,seed,lr,batch_size,step,loss");
    assert_eq!(gplab::experiments::SUMMARY_HEADER, "method,sparsity,step,mean_loss,runs");
    assert_eq!(gplab::experiments::RUNS_HEADER, "method,sparsity,width,seed,steps_completed,diverged,final_loss");
}
