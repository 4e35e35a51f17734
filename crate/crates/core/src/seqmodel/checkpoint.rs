//! Binary checkpoint: magic, u32 version, config block, then every parameter
//! as little-endian f64 in declared order.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{ModelConfig, SequenceModel};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TAILRCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

fn encode(model: &SequenceModel) -> Vec<u8> {
    let c = model.config();
    let mut out = Vec::with_capacity(8 + 4 + 32 + model.param_count() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for d in [c.vocab_size, c.embed_dim, c.hidden_dim, model.param_count()] {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for p in model.params() {
        for v in p.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn decode(bytes: &[u8]) -> Result<SequenceModel> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 44 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {version}, this build reads {CHECKPOINT_VERSION}"
        )));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[12 + 8 * i..20 + 8 * i].try_into().expect("8 bytes")) as usize;
    let config = ModelConfig {
        vocab_size: word(0),
        embed_dim: word(1),
        hidden_dim: word(2),
    };
    let count = word(3);
    let body = &bytes[44..];
    let shapes = config.param_shapes();
    let expected: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    if count != expected || body.len() != expected * 8 {
        return Err(Error::Checkpoint(format!(
            "expected {expected} parameters, header says {count}, body holds {}",
            body.len() / 8
        )));
    }
    let mut vals = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let params = shapes
        .into_iter()
        .map(|s| {
            let n = s.iter().product();
            Tensor::new(s, vals.by_ref().take(n).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    SequenceModel::from_params(config, params)
}

pub fn save_checkpoint(model: &SequenceModel, path: &Path) -> Result<()> {
    fs::write(path, encode(model))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<SequenceModel> {
    decode(&fs::read(path)?)
}

/// SHA-256 of the serialized parameters, hex encoded.
pub fn checkpoint_hash(model: &SequenceModel) -> String {
    hex::encode(Sha256::digest(encode(model)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_version_check() {
        let cfg = ModelConfig {
            vocab_size: 4,
            embed_dim: 2,
            hidden_dim: 3,
        };
        let m = SequenceModel::init(cfg, 11).unwrap();
        let bytes = encode(&m);
        assert_eq!(decode(&bytes).unwrap(), m);
        let mut bumped = bytes.clone();
        bumped[8] = 2;
        assert!(matches!(decode(&bumped), Err(Error::Checkpoint(_))));
        assert!(decode(&bytes[..bytes.len() - 8]).is_err());
        assert_eq!(checkpoint_hash(&m), checkpoint_hash(&m.clone()));
    }
}
