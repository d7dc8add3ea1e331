//! Buffered retraining protocols: variational (half-original /
//! half-augmented) and split-class (0–4 then a 50/50 mix with 5–9).

use std::sync::Arc;

use crate::error::Result;
use crate::rng::SeededRng;
use crate::tensor::Tensor;

use super::augment::{augment_batch, augment_image, AugmentSpec};
use super::{LabeledSet, Provenance};

/// One training mini-batch.
#[derive(Clone, Debug)]
pub struct Batch {
    pub images: Tensor,
    pub labels: Vec<u8>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label_indices(&self) -> Vec<usize> {
        self.labels.iter().map(|&l| l as usize).collect()
    }
}

/// A deterministic per-epoch source of mini-batches.
pub trait BatchStream {
    fn epoch_samples(&self) -> usize;
    fn batch_size(&self) -> usize;
    fn num_batches(&self) -> usize {
        self.epoch_samples().div_ceil(self.batch_size())
    }
    fn batch(&self, epoch: usize, index: usize) -> Batch;
}

fn gather(set: &LabeledSet, indices: &[usize]) -> (Vec<f32>, Vec<u8>) {
    let n = indices.len();
    let (c, h, w) = set.sample_shape();
    let mut data = Vec::with_capacity(n * c * h * w);
    let mut labels = Vec::with_capacity(n);
    for &i in indices {
        data.extend_from_slice(set.image(i));
        labels.push(set.labels[i]);
    }
    (data, labels)
}

/// Plain shuffled pass over one set, for initial training.
pub struct SimpleStream {
    set: Arc<LabeledSet>,
    batch_size: usize,
    seed: u64,
}

impl SimpleStream {
    pub fn new(set: Arc<LabeledSet>, batch_size: usize, seed: u64) -> Self {
        Self {
            set,
            batch_size,
            seed,
        }
    }
}

impl BatchStream for SimpleStream {
    fn epoch_samples(&self) -> usize {
        self.set.len()
    }

    fn batch_size(&self) -> usize {
        self.batch_size
    }

    fn batch(&self, epoch: usize, index: usize) -> Batch {
        let mut perm: Vec<usize> = (0..self.set.len()).collect();
        let mut rng = SeededRng::from_parts(&[self.seed, epoch as u64, 0x51]);
        rng.shuffle(&mut perm);
        let start = index * self.batch_size;
        let end = (start + self.batch_size).min(perm.len());
        let (data, labels) = gather(&self.set, &perm[start..end]);
        let (c, h, w) = self.set.sample_shape();
        Batch {
            images: Tensor::new(vec![end - start, c, h, w], data)
                .expect("gathered batch is well-formed"),
            labels,
        }
    }
}

/// Buffered retraining source: every batch mixes ⌈b/2⌉ old-pool samples
/// with ⌊b/2⌋ new-pool samples; the epoch size stays at the initial
/// training set size.
pub struct RetrainStream {
    old_pool: Arc<LabeledSet>,
    new_pool: Arc<LabeledSet>,
    /// When set, new-pool samples are transformed with a draw derived
    /// from (stream seed, epoch, slot), i.e. redrawn every epoch.
    augment: Option<AugmentSpec>,
    batch_size: usize,
    epoch_samples: usize,
    seed: u64,
}

impl RetrainStream {
    /// Per-batch (old, new) sample counts for a given batch index.
    fn batch_split(&self, index: usize) -> (usize, usize) {
        let start = index * self.batch_size;
        let b = self.batch_size.min(self.epoch_samples - start);
        (b.div_ceil(2), b / 2)
    }

    fn epoch_perms(&self, epoch: usize) -> (Vec<usize>, Vec<usize>) {
        let mut old_perm: Vec<usize> = (0..self.old_pool.len()).collect();
        let mut new_perm: Vec<usize> = (0..self.new_pool.len()).collect();
        let mut rng_old = SeededRng::from_parts(&[self.seed, epoch as u64, 0x01d]);
        let mut rng_new = SeededRng::from_parts(&[self.seed, epoch as u64, 0x4e3]);
        rng_old.shuffle(&mut old_perm);
        rng_new.shuffle(&mut new_perm);
        (old_perm, new_perm)
    }
}

impl BatchStream for RetrainStream {
    fn epoch_samples(&self) -> usize {
        self.epoch_samples
    }

    fn batch_size(&self) -> usize {
        self.batch_size
    }

    fn batch(&self, epoch: usize, index: usize) -> Batch {
        let (old_perm, new_perm) = self.epoch_perms(epoch);
        // cursor positions accumulated over preceding batches
        let mut old_cursor = 0usize;
        let mut new_cursor = 0usize;
        for i in 0..index {
            let (o, n) = self.batch_split(i);
            old_cursor += o;
            new_cursor += n;
        }
        let (n_old, n_new) = self.batch_split(index);
        let old_idx: Vec<usize> = (0..n_old)
            .map(|i| old_perm[(old_cursor + i) % old_perm.len()])
            .collect();
        let new_idx: Vec<usize> = (0..n_new)
            .map(|i| new_perm[(new_cursor + i) % new_perm.len()])
            .collect();

        let (c, h, w) = self.old_pool.sample_shape();
        let (mut data, mut labels) = gather(&self.old_pool, &old_idx);
        match &self.augment {
            Some(spec) => {
                for (slot, &i) in new_idx.iter().enumerate() {
                    let mut rng = SeededRng::from_parts(&[
                        self.seed,
                        epoch as u64,
                        0xd24a,
                        (new_cursor + slot) as u64,
                    ]);
                    data.extend(augment_image(self.new_pool.image(i), c, h, w, spec, &mut rng));
                    labels.push(self.new_pool.labels[i]);
                }
            }
            None => {
                let (nd, nl) = gather(&self.new_pool, &new_idx);
                data.extend(nd);
                labels.extend(nl);
            }
        }
        Batch {
            images: Tensor::new(vec![n_old + n_new, c, h, w], data)
                .expect("gathered batch is well-formed"),
            labels,
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum ProtocolKind {
    Variational,
    Split,
}

/// Everything one benchmark needs: the initial training data, retraining
/// pools, validation sets for both phases, and the two test splits.
pub struct Protocol {
    pub kind: ProtocolKind,
    pub initial_train: Arc<LabeledSet>,
    pub initial_val: LabeledSet,
    pub retrain_val: LabeledSet,
    /// Original test set (variational) or classes 0–4 (split).
    pub test_a: LabeledSet,
    /// Augmented test set (variational) or classes 5–9 (split).
    pub test_b: LabeledSet,
    old_pool: Arc<LabeledSet>,
    new_pool: Arc<LabeledSet>,
    augment: Option<AugmentSpec>,
    retrain_epoch_samples: usize,
    pub num_classes: usize,
    pub seed: u64,
}

impl Protocol {
    /// Stream over the initial training set for a given run seed.
    pub fn initial_stream(&self, run_seed: u64, batch_size: usize) -> SimpleStream {
        SimpleStream::new(
            Arc::clone(&self.initial_train),
            batch_size,
            run_seed ^ self.seed.rotate_left(17),
        )
    }

    /// Buffered retraining stream for a given run seed.
    pub fn retrain_stream(&self, run_seed: u64, batch_size: usize) -> RetrainStream {
        RetrainStream {
            old_pool: Arc::clone(&self.old_pool),
            new_pool: Arc::clone(&self.new_pool),
            augment: self.augment.clone(),
            batch_size,
            epoch_samples: self.retrain_epoch_samples,
            seed: run_seed ^ self.seed.rotate_left(29),
        }
    }

    pub fn pool_sizes(&self) -> (usize, usize) {
        (self.old_pool.len(), self.new_pool.len())
    }
}

fn class_count(sets: &[&LabeledSet]) -> usize {
    sets.iter()
        .flat_map(|s| s.labels.iter())
        .map(|&l| l as usize + 1)
        .max()
        .unwrap_or(0)
}

/// Variational protocol: keep a random half of the training set, use the
/// other half as an augmentation pool, and mix them 50/50 per mini-batch.
/// The validation set is rebuilt the same way; the entire test set is
/// augmented as the second test split.
pub fn build_variational_protocol(
    train: &LabeledSet,
    val: &LabeledSet,
    test: &LabeledSet,
    spec: &AugmentSpec,
    seed: u64,
) -> Result<Protocol> {
    let mut idx: Vec<usize> = (0..train.len()).collect();
    let mut rng = SeededRng::from_parts(&[seed, 0xab]);
    rng.shuffle(&mut idx);
    let (a_idx, b_idx) = idx.split_at(train.len().div_ceil(2));
    let old_pool = train.subset(a_idx, Provenance::Original);
    let new_pool = train.subset(b_idx, Provenance::Augmented);

    // validation: same half/half construction, materialized once
    let mut vidx: Vec<usize> = (0..val.len()).collect();
    let mut vrng = SeededRng::from_parts(&[seed, 0x0a1]);
    vrng.shuffle(&mut vidx);
    let (va_idx, vb_idx) = vidx.split_at(val.len().div_ceil(2));
    let val_kept = val.subset(va_idx, Provenance::Original);
    let val_aug_src = val.subset(vb_idx, Provenance::Augmented);
    let val_aug = LabeledSet::new(
        augment_batch(&val_aug_src.images, spec, seed ^ 0xa1a),
        val_aug_src.labels.clone(),
        Provenance::Augmented,
    )?;
    let retrain_val = val_kept.concat(&val_aug)?;

    let test_aug = LabeledSet::new(
        augment_batch(&test.images, spec, seed ^ 0x7e57),
        test.labels.clone(),
        Provenance::Augmented,
    )?;

    let num_classes = class_count(&[train, val, test]);
    Ok(Protocol {
        kind: ProtocolKind::Variational,
        initial_train: Arc::new(train.clone()),
        initial_val: val.clone(),
        retrain_val,
        test_a: test.clone(),
        test_b: test_aug,
        old_pool: Arc::new(old_pool),
        new_pool: Arc::new(new_pool),
        augment: Some(spec.clone()),
        retrain_epoch_samples: train.len(),
        num_classes,
        seed,
    })
}

/// Split protocol: pretrain on classes 0–4, then retrain on batches mixing
/// a random half of classes 0–4 with a random half of classes 5–9, at the
/// initial training set's size.
pub fn build_split_protocol(
    train: &LabeledSet,
    val: &LabeledSet,
    test: &LabeledSet,
    seed: u64,
) -> Result<Protocol> {
    let part1 = train.subset(&train.indices_with_labels(0, 4), Provenance::Split04);
    let part2 = train.subset(&train.indices_with_labels(5, 9), Provenance::Split59);
    let initial_val = val.subset(&val.indices_with_labels(0, 4), Provenance::Split04);
    let test_a = test.subset(&test.indices_with_labels(0, 4), Provenance::Split04);
    let test_b = test.subset(&test.indices_with_labels(5, 9), Provenance::Split59);
    let epoch = part1.len();

    let num_classes = class_count(&[train, val, test]);
    Ok(Protocol {
        kind: ProtocolKind::Split,
        initial_train: Arc::new(part1.clone()),
        initial_val,
        retrain_val: val.clone(),
        test_a,
        test_b,
        old_pool: Arc::new(part1),
        new_pool: Arc::new(part2),
        augment: None,
        retrain_epoch_samples: epoch,
        num_classes,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth_set(n: usize, seed: u64) -> LabeledSet {
        let mut rng = SeededRng::from_seed(seed);
        let data: Vec<f32> = (0..n * 16).map(|_| rng.range_f32(0.0, 1.0)).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.below(10) as u8).collect();
        LabeledSet::new(
            Tensor::new(vec![n, 1, 4, 4], data).unwrap(),
            labels,
            Provenance::Original,
        )
        .unwrap()
    }

    #[test]
    fn variational_pools_halve_and_epoch_matches() {
        let train = synth_set(100, 1);
        let val = synth_set(20, 2);
        let test = synth_set(30, 3);
        let p =
            build_variational_protocol(&train, &val, &test, &AugmentSpec::default(), 7).unwrap();
        assert_eq!(p.pool_sizes(), (50, 50));
        let stream = p.retrain_stream(1, 10);
        assert_eq!(stream.epoch_samples(), 100);
        assert_eq!(stream.num_batches(), 10);
        assert_eq!(p.retrain_val.len(), 20);
        assert_eq!(p.test_b.len(), 30);
    }

    #[test]
    fn every_batch_mixes_half_and_half() {
        let train = synth_set(64, 4);
        let val = synth_set(16, 5);
        let test = synth_set(16, 6);
        let p =
            build_variational_protocol(&train, &val, &test, &AugmentSpec::default(), 9).unwrap();
        let stream = p.retrain_stream(3, 16);
        for epoch in 1..=2 {
            for i in 0..stream.num_batches() {
                let (o, n) = stream.batch_split(i);
                assert_eq!((o, n), (8, 8));
                let b = stream.batch(epoch, i);
                assert_eq!(b.len(), 16);
            }
        }
    }

    #[test]
    fn streams_are_pure_functions_of_seed() {
        let train = synth_set(60, 7);
        let val = synth_set(12, 8);
        let test = synth_set(12, 9);
        let p =
            build_variational_protocol(&train, &val, &test, &AugmentSpec::default(), 11).unwrap();
        let s1 = p.retrain_stream(5, 10);
        let s2 = p.retrain_stream(5, 10);
        let b1 = s1.batch(2, 3);
        let b2 = s2.batch(2, 3);
        assert_eq!(b1.labels, b2.labels);
        assert_eq!(b1.images.data(), b2.images.data());
        // different run seed changes the order
        let s3 = p.retrain_stream(6, 10);
        let b3 = s3.batch(2, 3);
        assert!(b3.labels != b1.labels || b3.images.data() != b1.images.data());
    }

    #[test]
    fn variational_old_half_covers_pool_once_per_epoch() {
        let train = synth_set(40, 10);
        let val = synth_set(8, 11);
        let test = synth_set(8, 12);
        let p =
            build_variational_protocol(&train, &val, &test, &AugmentSpec::default(), 13).unwrap();
        let stream = p.retrain_stream(2, 8);
        // collect all old-half images of one epoch; every pool image should
        // appear exactly once (4 per batch, 5 batches → 20 = pool size)
        let mut seen = Vec::new();
        for i in 0..stream.num_batches() {
            let b = stream.batch(1, i);
            for s in 0..4 {
                let img = &b.images.data()[s * 16..(s + 1) * 16];
                seen.push(img.to_vec());
            }
        }
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        seen.dedup();
        assert_eq!(seen.len(), 20);
    }

    #[test]
    fn split_protocol_partitions_classes() {
        let train = synth_set(200, 20);
        let val = synth_set(40, 21);
        let test = synth_set(40, 22);
        let p = build_split_protocol(&train, &val, &test, 5).unwrap();
        assert!(p.initial_train.labels.iter().all(|&l| l <= 4));
        assert!(p.test_a.labels.iter().all(|&l| l <= 4));
        assert!(p.test_b.labels.iter().all(|&l| l >= 5));
        assert_eq!(p.test_a.len() + p.test_b.len(), test.len());
        let stream = p.retrain_stream(1, 10);
        assert_eq!(stream.epoch_samples(), p.initial_train.len());
        // both classes present in a retraining batch
        let b = stream.batch(1, 0);
        assert!(b.labels.iter().any(|&l| l <= 4));
        assert!(b.labels.iter().any(|&l| l >= 5));
    }
}
