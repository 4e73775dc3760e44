//! On-disk container shared by network and baseline model files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "BCMODEL\0" | version u32 | manifest_len u64 | manifest_crc32 u32
//! manifest (JSON, manifest_len bytes)
//! blob: f64 LE values of every tensor, in manifest order
//! ```
//!
//! The manifest records the model kind, free-form metadata, tensor names and
//! shapes, and the CRC-32 of the blob.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::Tensor;

const MAGIC: &[u8; 8] = b"BCMODEL\0";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 4;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    kind: String,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
    blob_len: u64,
    blob_crc32: u32,
}

pub fn encode(kind: &str, meta: serde_json::Value, tensors: &[(String, Tensor)]) -> Result<Vec<u8>> {
    let mut blob = Vec::new();
    for (_, t) in tensors {
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        kind: kind.to_string(),
        meta,
        tensors: tensors
            .iter()
            .map(|(n, t)| TensorEntry {
                name: n.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        blob_len: blob.len() as u64,
        blob_crc32: crc32fast::hash(&blob),
    };
    let manifest = serde_json::to_vec(&manifest)?;
    let mut out = Vec::with_capacity(HEADER_LEN + manifest.len() + blob.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(&manifest).to_le_bytes());
    out.extend_from_slice(&manifest);
    out.extend_from_slice(&blob);
    Ok(out)
}

/// Returns the metadata and the named tensors.
pub fn decode(bytes: &[u8], kind: &str) -> Result<(serde_json::Value, Vec<(String, Tensor)>)> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(Error::format("model header", "not a model file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Version {
            expected: VERSION,
            found: version,
        });
    }
    let manifest_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let manifest_crc = u32::from_le_bytes(bytes[20..24].try_into().unwrap());
    let rest = &bytes[HEADER_LEN..];
    let manifest_bytes = &rest[..manifest_len.min(rest.len())];
    let found = crc32fast::hash(manifest_bytes);
    if found != manifest_crc || manifest_bytes.len() != manifest_len {
        return Err(Error::Checksum {
            expected: manifest_crc,
            found,
        });
    }
    let manifest: Manifest = serde_json::from_slice(manifest_bytes)?;
    let blob = &rest[manifest_len..];
    let found = crc32fast::hash(blob);
    if found != manifest.blob_crc32 || blob.len() as u64 != manifest.blob_len {
        return Err(Error::Checksum {
            expected: manifest.blob_crc32,
            found,
        });
    }
    if manifest.kind != kind {
        return Err(Error::format(
            "model kind",
            format!("expected {kind}, found {}", manifest.kind),
        ));
    }
    let mut values = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for entry in manifest.tensors {
        let n: usize = entry.shape.iter().product();
        let data: Vec<f64> = values.by_ref().take(n).collect();
        if data.len() != n {
            return Err(Error::format("model blob", format!("tensor {} truncated", entry.name)));
        }
        tensors.push((entry.name, Tensor::from_vec(entry.shape, data)?));
    }
    if values.next().is_some() {
        return Err(Error::format("model blob", "trailing values"));
    }
    Ok((manifest.meta, tensors))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<(String, Tensor)> {
        vec![
            ("a".into(), Tensor::from_vec(vec![2, 2], vec![1.0, -0.0, f64::MIN_POSITIVE, 3.5]).unwrap()),
            ("b".into(), Tensor::from_vec(vec![1], vec![1e300]).unwrap()),
        ]
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let bytes = encode("network", serde_json::json!({"x": 1}), &sample()).unwrap();
        let (meta, t) = decode(&bytes, "network").unwrap();
        assert_eq!(meta["x"], 1);
        for ((n1, a), (n2, b)) in t.iter().zip(sample().iter()) {
            assert_eq!(n1, n2);
            assert_eq!(a.shape(), b.shape());
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn truncation_and_tampering_are_detected() {
        let bytes = encode("network", serde_json::json!({}), &sample()).unwrap();
        for cut in [bytes.len() - 1, bytes.len() - 9, HEADER_LEN + 3] {
            assert!(matches!(decode(&bytes[..cut], "network"), Err(Error::Checksum { .. })));
        }
        let mut flipped = bytes.clone();
        *flipped.last_mut().unwrap() ^= 1;
        assert!(matches!(decode(&flipped, "network"), Err(Error::Checksum { .. })));
        let mut v2 = bytes.clone();
        v2[8] = 2;
        assert!(matches!(decode(&v2, "network"), Err(Error::Version { found: 2, .. })));
        assert!(decode(&bytes, "baseline").is_err());
        assert!(decode(b"garbage", "network").is_err());
    }
}
