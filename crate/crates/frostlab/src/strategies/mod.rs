//! The retraining strategy roster: base, train-from-scratch, fine-tuning,
//! EWC, MAS, boosted ensemble, frosted retraining.

pub mod boostnet;
pub mod frostnet;
pub mod importance;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Mode};
use crate::data::protocol::{Batch, Protocol};
use crate::error::{Error, Result};
use crate::nn::{build_from_meta, build_lenet, build_mlp, ActKind, Model};
use crate::tensor::{NodeId, Tensor};
use crate::train::{
    eval_accuracy, train, Checkpoint, EpochRecord, SupervisedModel, TrainConfig, Trainable,
};

use boostnet::{boostnet_fit, boostnet_infer};
use frostnet::frostnet_fit;
use importance::{estimate_fisher_diag, estimate_mas_importance, penalty_node, Importance};

#[derive(Copy, Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Base,
    Scratch,
    Finetune,
    Ewc,
    Mas,
    Boostnet,
    Frostnet,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 7] = [
        StrategyKind::Base,
        StrategyKind::Scratch,
        StrategyKind::Finetune,
        StrategyKind::Ewc,
        StrategyKind::Mas,
        StrategyKind::Boostnet,
        StrategyKind::Frostnet,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Base => "base",
            StrategyKind::Scratch => "scratch",
            StrategyKind::Finetune => "finetune",
            StrategyKind::Ewc => "ewc",
            StrategyKind::Mas => "mas",
            StrategyKind::Boostnet => "boostnet",
            StrategyKind::Frostnet => "frostnet",
        }
    }

    pub fn needs_base(&self) -> bool {
        !matches!(self, StrategyKind::Scratch)
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy {s}")))
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Copy, Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoosterArch {
    /// Same architecture as the base network.
    Same,
    /// Two-layer MLP head.
    Mlp,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub lambda_ewc: f32,
    pub lambda_mas: f32,
    pub importance_samples: usize,
    pub booster_arch: BoosterArch,
    pub booster_hidden: usize,
    pub frost_activation: ActKind,
    pub freeze_base_in_frost: bool,
    /// Apply the EWC/MAS penalty to batch-norm affine parameters too.
    pub penalize_bn: bool,
    pub train: TrainConfig,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            lambda_ewc: 100.0,
            lambda_mas: 1.0,
            importance_samples: 2000,
            booster_arch: BoosterArch::Same,
            booster_hidden: 256,
            frost_activation: ActKind::None,
            freeze_base_in_frost: false,
            penalize_bn: true,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Copy, Clone, Debug, Serialize, Deserialize)]
pub struct Metrics {
    pub acc_split_a: f64,
    pub acc_split_b: f64,
    /// Accuracy over the union of both test splits.
    pub acc_total: f64,
}

/// What a strategy run produces for inference.
pub enum TrainedStrategy {
    Single(Model),
    Ensemble { base: Model, booster: Model },
}

impl TrainedStrategy {
    pub fn scores(&self, images: &Tensor) -> Result<Tensor> {
        match self {
            TrainedStrategy::Single(m) => m.forward(images, Mode::Eval),
            TrainedStrategy::Ensemble { base, booster } => boostnet_infer(base, booster, images),
        }
    }
}

pub struct StrategyOutcome {
    pub trained: TrainedStrategy,
    pub metrics: Metrics,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub best_val_loss: f64,
    pub history: Vec<EpochRecord>,
}

/// Fine-tuning with a quadratic importance penalty anchored at the base
/// checkpoint.
pub struct PenalizedModel {
    pub inner: SupervisedModel,
    pub anchor: BTreeMap<String, Tensor>,
    pub importance: Importance,
    pub lambda: f32,
    pub exclude: BTreeSet<String>,
}

impl Trainable for PenalizedModel {
    fn step(&mut self, g: &mut Graph, batch: &Batch) -> Result<(NodeId, Vec<(String, NodeId)>)> {
        let x = g.constant(&batch.images)?;
        let (logits, bindings) = self.inner.model.forward_graph(g, x, Mode::Train)?;
        let (ce, _) = g.softmax_cross_entropy(logits, &batch.label_indices())?;
        let loss = match penalty_node(
            g,
            &bindings,
            &self.anchor,
            &self.importance,
            self.lambda,
            &self.exclude,
        )? {
            Some(penalty) => g.add(ce, penalty)?,
            None => ce,
        };
        Ok((loss, bindings))
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.inner.params_mut()
    }

    fn eval_scores(&self, images: &Tensor) -> Result<Tensor> {
        self.inner.eval_scores(images)
    }

    fn snapshot(&self) -> BTreeMap<String, Tensor> {
        self.inner.snapshot()
    }

    fn restore(&mut self, state: &BTreeMap<String, Tensor>) -> Result<()> {
        self.inner.restore(state)
    }
}

/// Instantiate a model from a checkpoint's architecture metadata and
/// tensors.
pub fn model_from_checkpoint(ckpt: &Checkpoint) -> Result<Model> {
    let mut model = build_from_meta(&ckpt.meta)?;
    model.load_state(&ckpt.tensors)?;
    Ok(model)
}

fn metrics_for(trained: &TrainedStrategy, protocol: &Protocol) -> Result<Metrics> {
    let eval_bs = 256;
    let (acc_a, correct_a, n_a) =
        eval_accuracy(|im| trained.scores(im), &protocol.test_a, eval_bs)?;
    let (acc_b, correct_b, n_b) =
        eval_accuracy(|im| trained.scores(im), &protocol.test_b, eval_bs)?;
    Ok(Metrics {
        acc_split_a: acc_a,
        acc_split_b: acc_b,
        acc_total: (correct_a + correct_b) as f64 / (n_a + n_b) as f64,
    })
}

fn bn_param_names(model: &Model) -> BTreeSet<String> {
    model
        .named_params()
        .into_iter()
        .map(|(n, _)| n)
        .filter(|n| n.ends_with(".gamma") || n.ends_with(".beta"))
        .collect()
}

/// Run one retraining strategy against a protocol and evaluate it on both
/// test splits.
pub fn run_strategy(
    kind: StrategyKind,
    base: Option<&Checkpoint>,
    protocol: &Protocol,
    cfg: &StrategyConfig,
    seed: u64,
) -> Result<StrategyOutcome> {
    cfg.train.validate()?;
    if kind.needs_base() && base.is_none() {
        return Err(Error::Config(format!(
            "strategy {kind} requires a base checkpoint"
        )));
    }
    let stream = protocol.retrain_stream(seed, cfg.train.batch_size);
    let val = &protocol.retrain_val;

    let finish = |trained: TrainedStrategy,
                  outcome: Option<crate::train::TrainOutcome>|
     -> Result<StrategyOutcome> {
        let metrics = metrics_for(&trained, protocol)?;
        Ok(match outcome {
            None => StrategyOutcome {
                trained,
                metrics,
                epochs_run: 0,
                best_epoch: 0,
                best_val_acc: 0.0,
                best_val_loss: 0.0,
                history: Vec::new(),
            },
            Some(o) => StrategyOutcome {
                trained,
                metrics,
                epochs_run: o.epochs_run,
                best_epoch: o.best_epoch,
                best_val_acc: o.best_val_acc,
                best_val_loss: o.best_val_loss,
                history: o.history,
            },
        })
    };

    match kind {
        StrategyKind::Base => {
            let model = model_from_checkpoint(base.unwrap())?;
            finish(TrainedStrategy::Single(model), None)
        }
        StrategyKind::Scratch => {
            let (c, h, w) = protocol.initial_train.sample_shape();
            let model = build_lenet(
                crate::nn::InputSpec::new(c, h, w),
                protocol.num_classes,
                seed ^ 0x5c2a7c4,
            )?;
            let mut t = SupervisedModel::new(model);
            let out = train(&mut t, &stream, val, &cfg.train)?;
            finish(TrainedStrategy::Single(t.model), Some(out))
        }
        StrategyKind::Finetune => {
            let model = model_from_checkpoint(base.unwrap())?;
            let mut t = SupervisedModel::new(model);
            let out = train(&mut t, &stream, val, &cfg.train)?;
            finish(TrainedStrategy::Single(t.model), Some(out))
        }
        StrategyKind::Ewc | StrategyKind::Mas => {
            let model = model_from_checkpoint(base.unwrap())?;
            let n = cfg.importance_samples.min(protocol.initial_train.len());
            let (importance, lambda) = if kind == StrategyKind::Ewc {
                (
                    estimate_fisher_diag(&model, &protocol.initial_train, n, seed ^ 0xe3c)?,
                    cfg.lambda_ewc,
                )
            } else {
                (
                    estimate_mas_importance(&model, &protocol.initial_train, n, seed ^ 0x3a5)?,
                    cfg.lambda_mas,
                )
            };
            let anchor: BTreeMap<String, Tensor> = model
                .named_params()
                .into_iter()
                .map(|(n, t)| (n, t.clone()))
                .collect();
            let exclude = if cfg.penalize_bn {
                BTreeSet::new()
            } else {
                bn_param_names(&model)
            };
            let mut t = PenalizedModel {
                inner: SupervisedModel::new(model),
                anchor,
                importance,
                lambda,
                exclude,
            };
            let out = train(&mut t, &stream, val, &cfg.train)?;
            finish(TrainedStrategy::Single(t.inner.model), Some(out))
        }
        StrategyKind::Boostnet => {
            let base_model = model_from_checkpoint(base.unwrap())?;
            let (c, h, w) = protocol.initial_train.sample_shape();
            let input = crate::nn::InputSpec::new(c, h, w);
            let booster = match cfg.booster_arch {
                BoosterArch::Same => build_lenet(input, protocol.num_classes, seed ^ 0xb005)?,
                BoosterArch::Mlp => build_mlp(
                    input,
                    protocol.num_classes,
                    cfg.booster_hidden,
                    seed ^ 0xb005,
                )?,
            };
            let (ensemble, out) = boostnet_fit(base_model, booster, &stream, val, &cfg.train)?;
            finish(
                TrainedStrategy::Ensemble {
                    base: ensemble.base,
                    booster: ensemble.booster,
                },
                Some(out),
            )
        }
        StrategyKind::Frostnet => {
            let base_model = model_from_checkpoint(base.unwrap())?;
            let (merged, out) = frostnet_fit(
                base_model,
                cfg.frost_activation,
                cfg.freeze_base_in_frost,
                &stream,
                val,
                &cfg.train,
            )?;
            finish(TrainedStrategy::Single(merged), Some(out))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::augment::AugmentSpec;
    use crate::data::protocol::build_variational_protocol;
    use crate::data::{LabeledSet, Provenance};
    use crate::nn::InputSpec;
    use crate::rng::SeededRng;

    fn synth(n: usize, seed: u64) -> LabeledSet {
        let mut rng = SeededRng::from_seed(seed);
        let data: Vec<f32> = (0..n * 1024).map(|_| rng.range_f32(0.0, 1.0)).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.below(10) as u8).collect();
        LabeledSet::new(
            Tensor::new(vec![n, 1, 32, 32], data).unwrap(),
            labels,
            Provenance::Original,
        )
        .unwrap()
    }

    fn tiny_protocol(seed: u64) -> Protocol {
        build_variational_protocol(
            &synth(24, 1),
            &synth(8, 2),
            &synth(8, 3),
            &AugmentSpec::default(),
            seed,
        )
        .unwrap()
    }

    fn tiny_cfg() -> StrategyConfig {
        StrategyConfig {
            importance_samples: 8,
            train: TrainConfig {
                max_epochs: 2,
                patience: 1,
                batch_size: 8,
                ..TrainConfig::default()
            },
            ..StrategyConfig::default()
        }
    }

    fn base_checkpoint(protocol: &Protocol) -> Checkpoint {
        let model = build_lenet(InputSpec::new(1, 28, 28), protocol.num_classes, 42).unwrap();
        let mut meta: BTreeMap<String, String> = model.arch_meta().into_iter().collect();
        meta.insert("seed".into(), "42".into());
        Checkpoint::new(model.state(), meta)
    }

    #[test]
    fn missing_base_checkpoint_is_a_config_error() {
        let p = tiny_protocol(5);
        match run_strategy(StrategyKind::Finetune, None, &p, &tiny_cfg(), 1) {
            Err(Error::Config(_)) => {}
            Err(other) => panic!("unexpected error {other}"),
            Ok(_) => panic!("expected a config error"),
        }
    }

    #[test]
    fn scratch_ignores_base_checkpoint() {
        let p = tiny_protocol(6);
        let cfg = tiny_cfg();
        let ckpt = base_checkpoint(&p);
        let with = run_strategy(StrategyKind::Scratch, Some(&ckpt), &p, &cfg, 3).unwrap();
        let without = run_strategy(StrategyKind::Scratch, None, &p, &cfg, 3).unwrap();
        let (TrainedStrategy::Single(a), TrainedStrategy::Single(b)) =
            (&with.trained, &without.trained)
        else {
            panic!("scratch returns single models");
        };
        for (name, t) in a.state() {
            assert_eq!(t.data(), b.state()[&name].data(), "{name}");
        }
    }

    #[test]
    fn boostnet_never_mutates_the_base() {
        let p = tiny_protocol(7);
        let cfg = tiny_cfg();
        let ckpt = base_checkpoint(&p);
        let digest_before = ckpt.digest();
        let out = run_strategy(StrategyKind::Boostnet, Some(&ckpt), &p, &cfg, 4).unwrap();
        assert_eq!(ckpt.digest(), digest_before);
        let TrainedStrategy::Ensemble { base, .. } = &out.trained else {
            panic!("boostnet returns an ensemble");
        };
        for (name, t) in base.state() {
            assert_eq!(t.data(), ckpt.tensors[&name].data(), "{name}");
        }
    }

    #[test]
    fn frostnet_returns_base_shaped_model() {
        let p = tiny_protocol(8);
        let cfg = tiny_cfg();
        let ckpt = base_checkpoint(&p);
        let out = run_strategy(StrategyKind::Frostnet, Some(&ckpt), &p, &cfg, 5).unwrap();
        let TrainedStrategy::Single(m) = &out.trained else {
            panic!("frostnet returns a single model");
        };
        let names_base: Vec<(String, Vec<usize>)> = ckpt
            .tensors
            .iter()
            .map(|(n, t)| (n.clone(), t.shape().to_vec()))
            .collect();
        let names_out: Vec<(String, Vec<usize>)> = m
            .state()
            .iter()
            .map(|(n, t)| (n.clone(), t.shape().to_vec()))
            .collect();
        assert_eq!(names_base, names_out);
    }

    #[test]
    fn total_equals_mean_of_split_accuracies_when_sizes_match() {
        // equal-size test splits: union accuracy == mean of the two split
        // accuracies to floating-point exactness
        let p = tiny_protocol(10);
        assert_eq!(p.test_a.len(), p.test_b.len());
        let ckpt = base_checkpoint(&p);
        let out = run_strategy(StrategyKind::Base, Some(&ckpt), &p, &tiny_cfg(), 2).unwrap();
        let mean = (out.metrics.acc_split_a + out.metrics.acc_split_b) / 2.0;
        assert!((out.metrics.acc_total - mean).abs() <= 1e-9);
    }

    #[test]
    fn base_strategy_evaluates_without_training() {
        let p = tiny_protocol(9);
        let ckpt = base_checkpoint(&p);
        let out = run_strategy(StrategyKind::Base, Some(&ckpt), &p, &tiny_cfg(), 6).unwrap();
        assert_eq!(out.epochs_run, 0);
        assert!(out.history.is_empty());
        assert!((0.0..=1.0).contains(&out.metrics.acc_total));
    }
}
