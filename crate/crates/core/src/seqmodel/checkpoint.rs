//! Binary checkpoint format.
//!
//! ```text
//! magic    8 bytes   "DQOCKPT1"
//! hlen     u32 LE    length of the JSON header
//! header   hlen      {"arch": {...}, "vocab": {...}, "num_params": n}
//! theta    8n bytes  f64 LE
//! ```
//!
//! Loading then saving reproduces the file byte for byte.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::arch::Architecture;
use super::model::Transformer;
use super::vocab::Vocab;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"DQOCKPT1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    arch: Architecture,
    vocab: Vocab,
    num_params: usize,
}

pub fn to_bytes(model: &Transformer) -> Vec<u8> {
    let header = Header {
        arch: model.arch().clone(),
        vocab: *model.vocab(),
        num_params: model.num_params(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + header.len() + 8 * model.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for x in model.theta() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<Transformer> {
    let bad = |d: &str| Error::format("checkpoint", d.to_string());
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(bad("missing magic header"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = bytes
        .get(12..12 + hlen)
        .ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| bad(&e.to_string()))?;
    let rest = &bytes[12 + hlen..];
    if rest.len() != 8 * header.num_params {
        return Err(bad("parameter payload has the wrong length"));
    }
    let theta = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Transformer::from_parts(header.arch, header.vocab, theta)
}

pub fn save(model: &Transformer, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Transformer> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resave_is_byte_identical() {
        let arch = Architecture {
            d_model: 8,
            heads: 1,
            d_ff: 8,
            encoder_layers: 1,
            decoder_layers: 1,
            max_len: 5,
        };
        let m = Transformer::init(arch, Vocab::new(9).unwrap(), 4).unwrap();
        let bytes = to_bytes(&m);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn corrupt_payloads_are_rejected() {
        let m = Transformer::uniform(Architecture::default(), Vocab::new(8).unwrap()).unwrap();
        let mut bytes = to_bytes(&m);
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(from_bytes(&bytes).is_err());
    }
}
