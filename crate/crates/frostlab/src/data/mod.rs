//! Dataset containers, ingestion, augmentation, and the buffered
//! retraining protocols.

pub mod augment;
pub mod cifar;
pub mod idx;
pub mod protocol;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// Where a set of samples came from.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum Provenance {
    Original,
    Augmented,
    Split04,
    Split59,
}

/// Images in `[N, C, H, W]` with values in [0, 1] and one label per image.
#[derive(Clone, Debug)]
pub struct LabeledSet {
    pub images: Tensor,
    pub labels: Vec<u8>,
    pub tag: Provenance,
}

impl LabeledSet {
    pub fn new(images: Tensor, labels: Vec<u8>, tag: Provenance) -> Result<Self> {
        let shape = images.shape();
        if shape.len() != 4 || shape[0] != labels.len() {
            return Err(Error::Contract(format!(
                "images {:?} vs {} labels",
                shape,
                labels.len()
            )));
        }
        if images.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Contract("pixel outside [0, 1]".into()));
        }
        Ok(Self {
            images,
            labels,
            tag,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_shape(&self) -> (usize, usize, usize) {
        let s = self.images.shape();
        (s[1], s[2], s[3])
    }

    fn sample_numel(&self) -> usize {
        let (c, h, w) = self.sample_shape();
        c * h * w
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.sample_numel();
        &self.images.data()[i * n..(i + 1) * n]
    }

    /// New set holding the listed samples, in order.
    pub fn subset(&self, indices: &[usize], tag: Provenance) -> Self {
        let n = self.sample_numel();
        let (c, h, w) = self.sample_shape();
        let mut data = Vec::with_capacity(indices.len() * n);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        Self {
            images: Tensor::new(vec![indices.len(), c, h, w], data)
                .expect("subset of a valid set is valid"),
            labels,
            tag,
        }
    }

    /// Deterministic truncation to at most `n` samples after a seeded
    /// shuffle; used for desk-scale runs.
    pub fn shuffled_truncate(&self, n: usize, seed: u64) -> Self {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        let mut rng = SeededRng::from_parts(&[seed, 0x7256]);
        rng.shuffle(&mut idx);
        idx.truncate(n.min(self.len()));
        self.subset(&idx, self.tag)
    }

    /// Indices of samples whose label falls in [lo, hi].
    pub fn indices_with_labels(&self, lo: u8, hi: u8) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| (lo..=hi).contains(&self.labels[i]))
            .collect()
    }

    pub fn concat(&self, other: &LabeledSet) -> Result<Self> {
        if self.sample_shape() != other.sample_shape() {
            return Err(Error::Contract("concat of mismatched sample shapes".into()));
        }
        let (c, h, w) = self.sample_shape();
        let mut data = self.images.data().to_vec();
        data.extend_from_slice(other.images.data());
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(Self {
            images: Tensor::new(vec![self.len() + other.len(), c, h, w], data)?,
            labels,
            tag: self.tag,
        })
    }
}

/// Carve a set into train/validation parts by seeded shuffle;
/// `val_fraction` of the samples land in the validation part.
pub fn split_train_val(set: &LabeledSet, val_fraction: f64, seed: u64) -> (LabeledSet, LabeledSet) {
    let mut idx: Vec<usize> = (0..set.len()).collect();
    let mut rng = SeededRng::from_parts(&[seed, 0x5711]);
    rng.shuffle(&mut idx);
    let n_val = ((set.len() as f64) * val_fraction).round() as usize;
    let (val_idx, train_idx) = idx.split_at(n_val);
    (
        set.subset(train_idx, set.tag),
        set.subset(val_idx, set.tag),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_set(n: usize) -> LabeledSet {
        let data: Vec<f32> = (0..n * 4).map(|i| (i % 7) as f32 / 10.0).collect();
        LabeledSet::new(
            Tensor::new(vec![n, 1, 2, 2], data).unwrap(),
            (0..n).map(|i| (i % 10) as u8).collect(),
            Provenance::Original,
        )
        .unwrap()
    }

    #[test]
    fn subset_keeps_alignment() {
        let s = tiny_set(10);
        let sub = s.subset(&[3, 7], Provenance::Original);
        assert_eq!(sub.len(), 2);
        assert_eq!(sub.labels, vec![3, 7]);
        assert_eq!(sub.image(0), s.image(3));
    }

    #[test]
    fn split_is_disjoint_and_complete() {
        let s = tiny_set(100);
        let (train, val) = split_train_val(&s, 0.1, 3);
        assert_eq!(train.len(), 90);
        assert_eq!(val.len(), 10);
        let (train2, val2) = split_train_val(&s, 0.1, 3);
        assert_eq!(train.labels, train2.labels);
        assert_eq!(val.labels, val2.labels);
    }

    #[test]
    fn pixel_range_enforced() {
        let images = Tensor::new(vec![1, 1, 1, 2], vec![0.5, 1.5]).unwrap();
        assert!(LabeledSet::new(images, vec![0], Provenance::Original).is_err());
    }
}
