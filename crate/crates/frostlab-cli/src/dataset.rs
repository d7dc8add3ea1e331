//! Dataset location and loading.

use std::path::{Path, PathBuf};

use frostlab::data::{cifar, idx, split_train_val, LabeledSet};
use frostlab::error::{Error, Result};

pub const DATA_ROOT_ENV: &str = "FROSTLAB_DATA_ROOT";

#[derive(Copy, Clone, PartialEq, Eq, Debug, clap::ValueEnum)]
pub enum Dataset {
    Mnist,
    Cifar10,
}

impl Dataset {
    pub fn name(&self) -> &'static str {
        match self {
            Dataset::Mnist => "mnist",
            Dataset::Cifar10 => "cifar10",
        }
    }
}

impl std::fmt::Display for Dataset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Resolve the dataset root: explicit flag, then $FROSTLAB_DATA_ROOT,
/// then ./data.
pub fn resolve_root(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Ok(env) = std::env::var(DATA_ROOT_ENV) {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    PathBuf::from("data")
}

pub struct LoadedData {
    pub train: LabeledSet,
    pub val: LabeledSet,
    pub test: LabeledSet,
    pub digest: String,
}

/// Load a dataset and carve the official train split 90/10 into
/// train/validation. `limit` truncates the training set (0 = full);
/// `limit_eval` truncates validation and test sets.
pub fn load(
    dataset: Dataset,
    root: &Path,
    split_seed: u64,
    limit: usize,
    limit_eval: usize,
) -> Result<LoadedData> {
    let dir = root.join(dataset.name());
    let (full_train, test) = match dataset {
        Dataset::Mnist => {
            let train = idx::load_mnist_idx(
                &dir.join("train-images-idx3-ubyte"),
                &dir.join("train-labels-idx1-ubyte"),
            )
            .map_err(|e| ingest_context(&dir, e))?;
            let test = idx::load_mnist_idx(
                &dir.join("t10k-images-idx3-ubyte"),
                &dir.join("t10k-labels-idx1-ubyte"),
            )
            .map_err(|e| ingest_context(&dir, e))?;
            (train, test)
        }
        Dataset::Cifar10 => {
            let train = cifar::load_cifar10_train(&dir).map_err(|e| ingest_context(&dir, e))?;
            let test = cifar::load_cifar10_test(&dir).map_err(|e| ingest_context(&dir, e))?;
            (train, test)
        }
    };
    let digest = set_digest(&full_train);
    let (mut train, mut val) = split_train_val(&full_train, 0.1, split_seed);
    let mut test = test;
    if limit > 0 {
        train = train.shuffled_truncate(limit, split_seed);
    }
    if limit_eval > 0 {
        val = val.shuffled_truncate(limit_eval, split_seed ^ 1);
        test = test.shuffled_truncate(limit_eval, split_seed ^ 2);
    }
    Ok(LoadedData {
        train,
        val,
        test,
        digest,
    })
}

fn ingest_context(dir: &Path, e: Error) -> Error {
    match e {
        Error::Io(io) => Error::Config(format!(
            "cannot read dataset under {} ({io}); point --data-root or ${DATA_ROOT_ENV} at a directory holding mnist/ and cifar10/",
            dir.display()
        )),
        other => other,
    }
}

pub fn fnv64(bytes: impl IntoIterator<Item = u8>) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x1000_0000_01b3);
    }
    format!("{hash:016x}")
}

/// Content digest of a labeled set (images then labels).
pub fn set_digest(set: &LabeledSet) -> String {
    let image_bytes = set.images.data().iter().flat_map(|v| v.to_le_bytes());
    fnv64(image_bytes.chain(set.labels.iter().copied()))
}
