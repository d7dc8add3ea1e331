//! Checkpoint container and its binary wire format.
//!
//! Layout: magic `FRW1`, u32 LE tensor count, then per tensor (sorted by
//! name) a u16 LE name length, the UTF-8 name, a u8 rank, rank u32 LE dims,
//! and the f32 LE data. The remainder of the file is a UTF-8 metadata block
//! of `key=value` lines. Save → load → save is byte-identical.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"FRW1";
const MAX_RANK: u8 = 8;

/// Named-tensor snapshot of trainable parameters (plus batch-norm running
/// statistics) with run metadata.
#[derive(Clone, Debug, Default)]
pub struct Checkpoint {
    pub tensors: BTreeMap<String, Tensor>,
    pub meta: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(tensors: BTreeMap<String, Tensor>, meta: BTreeMap<String, String>) -> Self {
        Self { tensors, meta }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, tensor) in &self.tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(tensor.rank() as u8);
            for &d in tensor.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for (k, v) in &self.meta {
            out.extend_from_slice(k.as_bytes());
            out.push(b'=');
            out.extend_from_slice(v.as_bytes());
            out.push(b'\n');
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |offset: usize, msg: &str| Error::Format {
            offset,
            msg: msg.to_string(),
        };
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
            if *pos + n > bytes.len() {
                return Err(fail(*pos, "truncated"));
            }
            let s = &bytes[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };

        let magic = take(&mut pos, 4)?;
        if magic != MAGIC {
            return Err(fail(0, &format!("bad magic {magic:02x?}, expected {MAGIC:02x?}")));
        }
        let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        // each tensor needs at least name-len + rank bytes
        if count > bytes.len() / 3 {
            return Err(fail(4, "tensor count exceeds file size"));
        }
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let at = pos;
            let name_len = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(take(&mut pos, name_len)?)
                .map_err(|_| fail(at, "tensor name is not UTF-8"))?
                .to_string();
            let rank = take(&mut pos, 1)?[0];
            if rank == 0 || rank > MAX_RANK {
                return Err(fail(pos - 1, &format!("unreasonable rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank as usize);
            let mut numel: u64 = 1;
            for _ in 0..rank {
                let d = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
                if d == 0 {
                    return Err(fail(pos - 4, "zero dimension"));
                }
                numel = numel.saturating_mul(d as u64);
                shape.push(d as usize);
            }
            if numel.saturating_mul(4) > (bytes.len() - pos) as u64 {
                return Err(fail(pos, "tensor data exceeds remaining file length"));
            }
            let raw = take(&mut pos, numel as usize * 4)?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(fail(at, &format!("non-finite value in tensor {name}")));
            }
            let tensor = Tensor::new(shape, data).map_err(|e| fail(at, &e.to_string()))?;
            if tensors.insert(name.clone(), tensor).is_some() {
                return Err(fail(at, &format!("duplicate tensor name {name}")));
            }
        }
        let meta_start = pos;
        let meta_text = std::str::from_utf8(&bytes[pos..])
            .map_err(|_| fail(meta_start, "metadata is not UTF-8"))?;
        let mut meta = BTreeMap::new();
        for (i, line) in meta_text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| fail(meta_start, &format!("metadata line {i} has no '='")))?;
            meta.insert(k.to_string(), v.to_string());
        }
        Ok(Self { tensors, meta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }

    /// FNV-1a over the serialized bytes; stable identity for provenance.
    pub fn digest(&self) -> String {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.to_bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x1000_0000_01b3);
        }
        format!("{hash:016x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut tensors = BTreeMap::new();
        tensors.insert(
            "w".to_string(),
            Tensor::new(vec![2, 2], vec![1.0, -2.0, 3.5, 0.25]).unwrap(),
        );
        tensors.insert(
            "b".to_string(),
            Tensor::new(vec![2], vec![0.0, 1.0]).unwrap(),
        );
        let mut meta = BTreeMap::new();
        meta.insert("seed".to_string(), "7".to_string());
        meta.insert("epoch".to_string(), "3".to_string());
        Checkpoint::new(tensors, meta)
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let ckpt = sample();
        let bytes = ckpt.to_bytes();
        let loaded = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(loaded.to_bytes(), bytes);
        assert_eq!(loaded.meta["seed"], "7");
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        match err {
            Error::Format { offset, msg } => {
                assert_eq!(offset, 0);
                assert!(msg.contains("magic"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn tampered_length_returns_no_partial_checkpoint() {
        let ckpt = sample();
        let mut bytes = ckpt.to_bytes();
        // inflate the first tensor's first dimension
        // layout: magic(4) count(4) name_len(2) name(1) rank(1) dims...
        let dim_off = 4 + 4 + 2 + 1 + 1;
        bytes[dim_off..dim_off + 4].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = sample().to_bytes();
        for cut in [3, 7, 10, bytes.len() / 2] {
            assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err(), "cut {cut}");
        }
    }

    #[test]
    fn lenet_checkpoint_size_matches_arithmetic() {
        use crate::nn::{build_lenet, InputSpec};
        let model = build_lenet(InputSpec::new(1, 28, 28), 10, 0).unwrap();
        let state = model.state();
        let trainable: usize = model.param_count();
        let running: usize = state
            .iter()
            .filter(|(n, _)| n.contains("running"))
            .map(|(_, t)| t.numel())
            .sum();
        assert_eq!(trainable, 61_750);
        assert_eq!(running, 44);

        let mut meta = BTreeMap::new();
        meta.insert("seed".to_string(), "0".to_string());
        let ckpt = Checkpoint::new(state.clone(), meta.clone());
        // header 8 + per tensor (2 + name + 1 + 4·rank + 4·numel) + metadata
        let tensor_bytes: usize = state
            .iter()
            .map(|(n, t)| 2 + n.len() + 1 + 4 * t.rank() + 4 * t.numel())
            .sum();
        let meta_bytes: usize = meta.iter().map(|(k, v)| k.len() + 1 + v.len() + 1).sum();
        assert_eq!(ckpt.to_bytes().len(), 8 + tensor_bytes + meta_bytes);
    }

    #[test]
    fn digest_tracks_content() {
        let a = sample();
        let mut b = sample();
        assert_eq!(a.digest(), b.digest());
        b.meta.insert("epoch".to_string(), "4".to_string());
        assert_ne!(a.digest(), b.digest());
    }
}
