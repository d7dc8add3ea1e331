//! Regenerate the augmentation golden checksums (run manually after an
//! intentional change to the augmentation pipeline).

use frostlab::data::augment::{augment_image, AugmentSpec};
use frostlab::rng::SeededRng;

fn fnv64(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x1000_0000_01b3);
    }
    hash
}

fn main() {
    // deterministic gradient-pattern image
    let img: Vec<f32> = (0..32 * 32)
        .map(|i| ((i % 32) as f32 / 31.0 + (i / 32) as f32 / 31.0) / 2.0)
        .collect();
    println!("seed,checksum");
    for seed in 0u64..6 {
        let mut rng = SeededRng::from_parts(&[seed, 0x901d]);
        let out = augment_image(&img, 1, 32, 32, &AugmentSpec::default(), &mut rng);
        let sum = fnv64(out.iter().flat_map(|v| v.to_le_bytes()));
        println!("{seed},{sum:016x}");
    }
}
