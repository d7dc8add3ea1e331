//! Pretraining and retraining orchestration plus the result-row schema.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use frostlab::data::augment::AugmentSpec;
use frostlab::data::protocol::{build_split_protocol, build_variational_protocol, Protocol};
use frostlab::error::{Error, Result};
use frostlab::nn::{build_lenet, InputSpec};
use frostlab::strategies::{run_strategy, StrategyConfig, StrategyKind};
use frostlab::train::{
    eval_accuracy, history_csv, train, Checkpoint, SupervisedModel, TrainConfig,
};

use crate::dataset::{fnv64, Dataset, LoadedData};

#[derive(Copy, Clone, PartialEq, Eq, Debug, clap::ValueEnum)]
pub enum ProtocolArg {
    Variational,
    Split,
}

impl ProtocolArg {
    pub fn name(&self) -> &'static str {
        match self {
            ProtocolArg::Variational => "variational",
            ProtocolArg::Split => "split",
        }
    }
}

impl std::fmt::Display for ProtocolArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub fn build_protocol(
    arg: ProtocolArg,
    data: &LoadedData,
    spec: &AugmentSpec,
    seed: u64,
) -> Result<Protocol> {
    match arg {
        ProtocolArg::Variational => {
            build_variational_protocol(&data.train, &data.val, &data.test, spec, seed)
        }
        ProtocolArg::Split => build_split_protocol(&data.train, &data.val, &data.test, seed),
    }
}

/// One (strategy, seed) cell, as serialized to result-*.json.
#[derive(Debug, Serialize, Deserialize)]
pub struct ResultRow {
    pub strategy: String,
    pub seed: u64,
    pub protocol: String,
    pub dataset: String,
    pub acc_split_a: f64,
    pub acc_split_b: f64,
    pub acc_total: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub base_digest: String,
    pub dataset_digest: String,
    pub config: serde_json::Value,
    pub config_hash: String,
}

pub struct PretrainOutput {
    pub checkpoint: Checkpoint,
    pub acc_test_a: f64,
    pub acc_test_b: f64,
    pub epochs_run: usize,
    pub history: String,
}

/// Train the base model on the protocol's initial set and evaluate it on
/// both test splits.
pub fn pretrain(protocol: &Protocol, train_cfg: &TrainConfig, seed: u64) -> Result<PretrainOutput> {
    let (c, h, w) = protocol.initial_train.sample_shape();
    let model = build_lenet(InputSpec::new(c, h, w), protocol.num_classes, seed)?;
    let mut trainable = SupervisedModel::new(model);
    let stream = protocol.initial_stream(seed, train_cfg.batch_size);
    let out = train(&mut trainable, &stream, &protocol.initial_val, train_cfg)?;

    let (acc_a, _, _) = eval_accuracy(
        |im| trainable.model.forward(im, frostlab::autograd::Mode::Eval),
        &protocol.test_a,
        256,
    )?;
    let (acc_b, _, _) = eval_accuracy(
        |im| trainable.model.forward(im, frostlab::autograd::Mode::Eval),
        &protocol.test_b,
        256,
    )?;

    let mut meta: BTreeMap<String, String> = trainable.model.arch_meta().into_iter().collect();
    meta.insert("seed".into(), seed.to_string());
    meta.insert("strategy".into(), "base".into());
    meta.insert("epoch".into(), out.best_epoch.to_string());
    meta.insert("val_acc".into(), format!("{}", out.best_val_acc));
    meta.insert("val_loss".into(), format!("{}", out.best_val_loss));
    let checkpoint = Checkpoint::new(trainable.model.state(), meta);
    Ok(PretrainOutput {
        checkpoint,
        acc_test_a: acc_a,
        acc_test_b: acc_b,
        epochs_run: out.epochs_run,
        history: history_csv(&out.history),
    })
}

/// Run the (strategy × seed) grid, writing one result JSON and one history
/// CSV per cell.
#[allow(clippy::too_many_arguments)]
pub fn retrain_grid(
    protocol: &Protocol,
    dataset: Dataset,
    protocol_name: &str,
    base: Option<&Checkpoint>,
    strategies: &[StrategyKind],
    seeds: &[u64],
    cfg: &StrategyConfig,
    dataset_digest: &str,
    out_dir: &Path,
) -> Result<Vec<ResultRow>> {
    std::fs::create_dir_all(out_dir)?;
    let config_json = serde_json::to_value(cfg).map_err(|e| Error::Config(e.to_string()))?;
    let config_hash = fnv64(config_json.to_string().into_bytes());
    let base_digest = base.map(|c| c.digest()).unwrap_or_default();

    let mut rows = Vec::new();
    for &kind in strategies {
        for &seed in seeds {
            let outcome = run_strategy(kind, base, protocol, cfg, seed)?;
            let row = ResultRow {
                strategy: kind.name().to_string(),
                seed,
                protocol: protocol_name.to_string(),
                dataset: dataset.name().to_string(),
                acc_split_a: outcome.metrics.acc_split_a,
                acc_split_b: outcome.metrics.acc_split_b,
                acc_total: outcome.metrics.acc_total,
                epochs_run: outcome.epochs_run,
                best_epoch: outcome.best_epoch,
                best_val_acc: outcome.best_val_acc,
                base_digest: base_digest.clone(),
                dataset_digest: dataset_digest.to_string(),
                config: config_json.clone(),
                config_hash: config_hash.clone(),
            };
            let json =
                serde_json::to_string_pretty(&row).map_err(|e| Error::Config(e.to_string()))?;
            std::fs::write(
                out_dir.join(format!("result-{}-seed{}.json", kind.name(), seed)),
                json,
            )?;
            std::fs::write(
                out_dir.join(format!("history-{}-seed{}.csv", kind.name(), seed)),
                history_csv(&outcome.history),
            )?;
            println!(
                "{:<10} seed {}: {} {:.4} | {} {:.4} | total {:.4} ({} epochs)",
                kind.name(),
                seed,
                if protocol_name == "split" { "0-4" } else { "orig" },
                outcome.metrics.acc_split_a,
                if protocol_name == "split" { "5-9" } else { "aug" },
                outcome.metrics.acc_split_b,
                outcome.metrics.acc_total,
                outcome.epochs_run,
            );
            rows.push(row);
        }
    }
    Ok(rows)
}
