//! IDX (MNIST) binary parsing.
//!
//! Big-endian headers: magic 0x00000803 for images (then count, rows,
//! cols), 0x00000801 for labels (then count), followed by raw bytes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{LabeledSet, Provenance};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(bytes: &[u8], pos: usize) -> Result<u32> {
    bytes
        .get(pos..pos + 4)
        .map(|s| u32::from_be_bytes(s.try_into().unwrap()))
        .ok_or(Error::Format {
            offset: pos,
            msg: "truncated header".into(),
        })
}

/// Raw image payload of an IDX3 file: (count, rows, cols, pixels).
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = read_u32_be(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        });
    }
    let count = read_u32_be(bytes, 4)? as usize;
    let rows = read_u32_be(bytes, 8)? as usize;
    let cols = read_u32_be(bytes, 12)? as usize;
    let need = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or(Error::Format {
            offset: 4,
            msg: "image dimensions overflow".into(),
        })?;
    let body = &bytes[16.min(bytes.len())..];
    if body.len() != need {
        return Err(Error::Format {
            offset: 16,
            msg: format!("payload is {} bytes, header promises {}", body.len(), need),
        });
    }
    Ok((count, rows, cols, body))
}

/// Raw label payload of an IDX1 file: (count, labels).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<(usize, &[u8])> {
    let magic = read_u32_be(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"),
        });
    }
    let count = read_u32_be(bytes, 4)? as usize;
    let body = &bytes[8.min(bytes.len())..];
    if body.len() != count {
        return Err(Error::Format {
            offset: 8,
            msg: format!("payload is {} bytes, header promises {}", body.len(), count),
        });
    }
    Ok((count, body))
}

/// Assemble a labeled set from IDX image/label payloads. 28×28 images are
/// zero-padded to 32×32; pixels are scaled by 1/255.
pub fn mnist_from_bytes(image_bytes: &[u8], label_bytes: &[u8]) -> Result<LabeledSet> {
    let (n_images, rows, cols, pixels) = parse_idx_images(image_bytes)?;
    let (n_labels, labels) = parse_idx_labels(label_bytes)?;
    if n_images != n_labels {
        return Err(Error::Contract(format!(
            "{n_images} images vs {n_labels} labels"
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
        return Err(Error::Label {
            label: bad as usize,
            num_classes: 10,
        });
    }
    let (out_h, out_w, pad) = match (rows, cols) {
        (28, 28) => (32, 32, 2),
        (32, 32) => (32, 32, 0),
        _ => {
            return Err(Error::Config(format!(
                "unsupported image size {rows}x{cols}"
            )))
        }
    };
    let mut data = vec![0.0f32; n_images * out_h * out_w];
    for img in 0..n_images {
        let src = &pixels[img * rows * cols..(img + 1) * rows * cols];
        let dst = &mut data[img * out_h * out_w..(img + 1) * out_h * out_w];
        for r in 0..rows {
            for c in 0..cols {
                dst[(r + pad) * out_w + (c + pad)] = src[r * cols + c] as f32 / 255.0;
            }
        }
    }
    LabeledSet::new(
        Tensor::new(vec![n_images, 1, out_h, out_w], data)?,
        labels.to_vec(),
        Provenance::Original,
    )
}

/// Load an MNIST split from its image and label files.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledSet> {
    let image_bytes = std::fs::read(images_path)?;
    let label_bytes = std::fs::read(labels_path)?;
    mnist_from_bytes(&image_bytes, &label_bytes)
}
