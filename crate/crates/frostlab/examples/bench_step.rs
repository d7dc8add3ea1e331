//! Quick wall-clock probe of forward+backward+update on LeNet.

use std::sync::Arc;
use std::time::Instant;

use frostlab::data::protocol::{BatchStream, SimpleStream};
use frostlab::data::{LabeledSet, Provenance};
use frostlab::nn::{build_lenet, InputSpec};
use frostlab::rng::SeededRng;
use frostlab::tensor::Tensor;
use frostlab::train::{train, SupervisedModel, TrainConfig};

fn main() {
    let n = 2560;
    let mut rng = SeededRng::from_seed(1);
    let data: Vec<f32> = (0..n * 1024).map(|_| rng.range_f32(0.0, 1.0)).collect();
    let labels: Vec<u8> = (0..n).map(|_| rng.below(10) as u8).collect();
    let set = LabeledSet::new(
        Tensor::new(vec![n, 1, 32, 32], data).unwrap(),
        labels,
        Provenance::Original,
    )
    .unwrap();
    let model = build_lenet(InputSpec::new(1, 28, 28), 10, 0).unwrap();
    let mut t = SupervisedModel::new(model);
    let stream = SimpleStream::new(Arc::new(set.clone()), 128, 0);
    let cfg = TrainConfig {
        max_epochs: 2,
        patience: 1,
        ..TrainConfig::default()
    };
    let started = Instant::now();
    let out = train(&mut t, &stream, &set, &cfg).unwrap();
    let dt = started.elapsed().as_secs_f64();
    let batches = stream.num_batches() * out.epochs_run;
    println!(
        "{} batches of 128 in {:.2}s => {:.1} ms/batch, {:.0} samples/s",
        batches,
        dt,
        dt * 1000.0 / batches as f64,
        (batches * 128) as f64 / dt
    );
}
