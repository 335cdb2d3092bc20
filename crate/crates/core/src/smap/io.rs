//! Binary checkpoint format for pooling parameters.
//!
//! Layout: magic `SMAP1`, then `C`, `pe_hidden`, `heads` as little-endian
//! u32, then every tensor row-major as little-endian f32 in the order
//! pe_w1, pe_b1, pe_w2, pe_b2, wq, wk, wv, wo. Values are stored at f32
//! precision; parameters produced by [`SmapParams::init`] are f32-exact, so
//! save → load reproduces them bitwise.

use std::path::Path;

use super::SmapParams;
use crate::error::{Error, Result};

/// File magic.
pub const MAGIC: &str = "SMAP1";

/// Serializes parameters to checkpoint bytes.
pub fn encode_checkpoint(params: &SmapParams) -> Vec<u8> {
    let flat = params.flatten();
    let mut out = Vec::with_capacity(MAGIC.len() + 12 + flat.len() * 4);
    out.extend_from_slice(MAGIC.as_bytes());
    out.extend_from_slice(&(params.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(params.pe_hidden() as u32).to_le_bytes());
    out.extend_from_slice(&(params.heads() as u32).to_le_bytes());
    for v in flat {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// Number of stored scalars for the given header dimensions.
fn value_count(dim: u128, pe_hidden: u128) -> u128 {
    // pe_w1 (3*H) + pe_b1 (H) + pe_w2 (H*C) + pe_b2 (C) + wq/wk/wv/wo (4*C*C)
    3 * pe_hidden + pe_hidden + pe_hidden * dim + dim + 4 * dim * dim
}

/// Parses checkpoint bytes back into parameters.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<SmapParams> {
    let header = MAGIC.len() + 12;
    if bytes.len() < MAGIC.len() {
        return Err(Error::MagicMismatch {
            expected: MAGIC,
            found: String::from_utf8_lossy(bytes).into_owned(),
        });
    }
    if &bytes[..MAGIC.len()] != MAGIC.as_bytes() {
        return Err(Error::MagicMismatch {
            expected: MAGIC,
            found: String::from_utf8_lossy(&bytes[..MAGIC.len()]).into_owned(),
        });
    }
    if bytes.len() < header {
        return Err(Error::TruncatedPayload {
            expected: header as u64,
            found: bytes.len() as u64,
        });
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().expect("4 bytes"));
    let dim = u32_at(MAGIC.len()) as u128;
    let pe_hidden = u32_at(MAGIC.len() + 4) as u128;
    let heads = u32_at(MAGIC.len() + 8) as usize;
    let count = value_count(dim, pe_hidden);
    // The format is u32-addressable; larger headers are malformed, not huge.
    if count > u32::MAX as u128 {
        return Err(Error::CountOverflow {
            count: count.min(u64::MAX as u128) as u64,
        });
    }
    let count = count as u64;
    let expected = header as u64 + count * 4;
    if (bytes.len() as u64) < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: bytes.len() as u64,
        });
    }
    if bytes.len() as u64 > expected {
        return Err(Error::TrailingBytes {
            expected,
            found: bytes.len() as u64,
        });
    }
    let mut values = Vec::with_capacity(count as usize);
    for i in 0..count as usize {
        let off = header + i * 4;
        let v = f32::from_le_bytes(bytes[off..off + 4].try_into().expect("4 bytes"));
        values.push(v as f64);
    }
    let template = template_params(dim as usize, pe_hidden as usize, heads)?;
    template.with_values(&values)
}

/// Zeroed parameters with the right shapes for `with_values`.
fn template_params(dim: usize, pe_hidden: usize, heads: usize) -> Result<SmapParams> {
    SmapParams::new(
        ndarray::Array2::zeros((3, pe_hidden)),
        ndarray::Array1::zeros(pe_hidden),
        ndarray::Array2::zeros((pe_hidden, dim)),
        ndarray::Array1::zeros(dim),
        ndarray::Array2::zeros((dim, dim)),
        ndarray::Array2::zeros((dim, dim)),
        ndarray::Array2::zeros((dim, dim)),
        ndarray::Array2::zeros((dim, dim)),
        heads,
    )
}

/// Writes a checkpoint file.
pub fn save_checkpoint(params: &SmapParams, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint file.
pub fn load_checkpoint(path: &Path) -> Result<SmapParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initialized_params_round_trip_bitwise() {
        let params = SmapParams::init(16, 8, 4, 5).unwrap();
        let bytes = encode_checkpoint(&params);
        let loaded = decode_checkpoint(&bytes).unwrap();
        assert_eq!(params, loaded);
    }

    #[test]
    fn encoding_is_idempotent_after_one_rounding() {
        // Arbitrary f64 params lose precision once, then stay stable.
        let params = SmapParams::init(8, 4, 2, 1).unwrap();
        let mut nudged = params.clone();
        nudged.wq[[0, 0]] = 0.1 + 1e-12;
        let bytes1 = encode_checkpoint(&nudged);
        let loaded = decode_checkpoint(&bytes1).unwrap();
        let bytes2 = encode_checkpoint(&loaded);
        assert_eq!(bytes1, bytes2);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pooler.smap");
        let params = SmapParams::init(8, 4, 2, 7).unwrap();
        save_checkpoint(&params, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), params);
    }

    #[test]
    fn magic_mismatch_is_detected() {
        let params = SmapParams::init(8, 4, 2, 0).unwrap();
        let mut bytes = encode_checkpoint(&params);
        bytes[0] = b'X';
        assert!(matches!(
            decode_checkpoint(&bytes),
            Err(Error::MagicMismatch { .. })
        ));
        assert!(matches!(
            decode_checkpoint(b"SM"),
            Err(Error::MagicMismatch { .. })
        ));
    }

    #[test]
    fn truncation_and_trailing_bytes_are_detected() {
        let params = SmapParams::init(8, 4, 2, 0).unwrap();
        let bytes = encode_checkpoint(&params);
        assert!(matches!(
            decode_checkpoint(&bytes[..bytes.len() - 1]),
            Err(Error::TruncatedPayload { .. })
        ));
        assert!(matches!(
            decode_checkpoint(&bytes[..10]),
            Err(Error::TruncatedPayload { .. })
        ));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(
            decode_checkpoint(&extra),
            Err(Error::TrailingBytes { .. })
        ));
    }

    #[test]
    fn absurd_header_dimensions_are_count_overflow() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC.as_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes()); // dim
        bytes.extend_from_slice(&8u32.to_le_bytes()); // pe_hidden
        bytes.extend_from_slice(&4u32.to_le_bytes()); // heads
        assert!(matches!(
            decode_checkpoint(&bytes),
            Err(Error::CountOverflow { .. })
        ));
    }

    #[test]
    fn invalid_heads_rejected_at_load() {
        let params = SmapParams::init(8, 4, 2, 0).unwrap();
        let mut bytes = encode_checkpoint(&params);
        // Overwrite the heads field with a non-divisor.
        let off = MAGIC.len() + 8;
        bytes[off..off + 4].copy_from_slice(&3u32.to_le_bytes());
        assert!(matches!(
            decode_checkpoint(&bytes),
            Err(Error::HeadsDoNotDivide { .. })
        ));
    }

    #[test]
    fn non_finite_values_rejected_at_load() {
        let params = SmapParams::init(8, 4, 2, 0).unwrap();
        let mut bytes = encode_checkpoint(&params);
        let header = MAGIC.len() + 12;
        bytes[header..header + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            decode_checkpoint(&bytes),
            Err(Error::NonFinite { .. })
        ));
    }
}
