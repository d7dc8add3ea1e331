//! CIFAR-10 binary batches: 3073-byte records of one label byte followed
//! by 32×32 R, G, B planes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{LabeledSet, Provenance};

pub const RECORD_LEN: usize = 3073;
const PLANE: usize = 32 * 32;

/// Parse a whole batch file worth of records.
pub fn parse_cifar_records(bytes: &[u8]) -> Result<LabeledSet> {
    if bytes.is_empty() || bytes.len() % RECORD_LEN != 0 {
        return Err(Error::Format {
            offset: bytes.len() - (bytes.len() % RECORD_LEN),
            msg: format!(
                "file length {} is not a positive multiple of {RECORD_LEN}",
                bytes.len()
            ),
        });
    }
    let n = bytes.len() / RECORD_LEN;
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * 3 * PLANE);
    for rec in 0..n {
        let r = &bytes[rec * RECORD_LEN..(rec + 1) * RECORD_LEN];
        if r[0] > 9 {
            return Err(Error::Label {
                label: r[0] as usize,
                num_classes: 10,
            });
        }
        labels.push(r[0]);
        for &px in &r[1..] {
            data.push(px as f32 / 255.0);
        }
    }
    LabeledSet::new(
        Tensor::new(vec![n, 3, 32, 32], data)?,
        labels,
        Provenance::Original,
    )
}

pub fn load_cifar10_file(path: &Path) -> Result<LabeledSet> {
    let bytes = std::fs::read(path)?;
    parse_cifar_records(&bytes)
}

/// All five training batches from a CIFAR-10 binary directory.
pub fn load_cifar10_train(dir: &Path) -> Result<LabeledSet> {
    let mut set: Option<LabeledSet> = None;
    for i in 1..=5 {
        let batch = load_cifar10_file(&dir.join(format!("data_batch_{i}.bin")))?;
        set = Some(match set {
            None => batch,
            Some(acc) => acc.concat(&batch)?,
        });
    }
    Ok(set.expect("five batches were read"))
}

pub fn load_cifar10_test(dir: &Path) -> Result<LabeledSet> {
    load_cifar10_file(&dir.join("test_batch.bin"))
}

/// Serialize a set back into record format (testing and corpus seeds).
pub fn to_records(set: &LabeledSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(set.len() * RECORD_LEN);
    for i in 0..set.len() {
        out.push(set.labels[i]);
        for &v in set.image(i) {
            out.push((v * 255.0).round() as u8);
        }
    }
    out
}
