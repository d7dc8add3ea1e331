mod dataset;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use frostlab::data::augment::AugmentSpec;
use frostlab::error::{Error, Result};
use frostlab::nn::ActKind;
use frostlab::strategies::{BoosterArch, StrategyConfig, StrategyKind};
use frostlab::train::{Checkpoint, OptimizerKind, TrainConfig};

use dataset::Dataset;
use run::ProtocolArg;

#[derive(Parser)]
#[command(
    name = "frostlab",
    about = "Continual-retraining benchmarks: boosted and frosted ensembles vs fine-tuning and importance penalties",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DataOpts {
    /// Dataset to run on
    #[arg(long, value_enum, default_value_t = Dataset::Mnist)]
    dataset: Dataset,

    /// Retraining protocol
    #[arg(long, value_enum, default_value_t = ProtocolArg::Variational)]
    protocol: ProtocolArg,

    /// Dataset root directory (falls back to $FROSTLAB_DATA_ROOT, then ./data)
    #[arg(long)]
    data_root: Option<PathBuf>,

    /// Protocol seed (splits, validation construction, test augmentation)
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Truncate the training set to N samples after a seeded shuffle (0 = full)
    #[arg(long, default_value_t = 0)]
    limit: usize,

    /// Truncate validation and test sets to N samples (0 = full)
    #[arg(long, default_value_t = 0)]
    limit_eval: usize,

    /// Draw rotations from {-45°, +45°} instead of the continuous range
    #[arg(long, default_value_t = false)]
    discrete_rotation: bool,
}

#[derive(Args, Clone)]
struct TrainOpts {
    /// Maximum training epochs
    #[arg(long, default_value_t = 50)]
    epochs: usize,

    /// Early stopping: consecutive non-improving epochs tolerated
    #[arg(long, default_value_t = 10)]
    patience: usize,

    #[arg(long, default_value_t = 128)]
    batch_size: usize,

    /// Adam learning rate
    #[arg(long, default_value_t = 1e-3)]
    lr: f32,
}

impl TrainOpts {
    fn to_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            max_epochs: self.epochs,
            patience: self.patience,
            batch_size: self.batch_size,
            optimizer: OptimizerKind::adam(self.lr),
            seed,
        }
    }
}

#[derive(Args, Clone)]
struct StrategyOpts {
    /// Penalty strength for EWC (quadratic Fisher anchor)
    #[arg(long, default_value_t = 100.0)]
    lambda_ewc: f32,

    /// Penalty strength for MAS
    #[arg(long, default_value_t = 1.0)]
    lambda_mas: f32,

    /// Override both penalty strengths at once
    #[arg(long)]
    lambda: Option<f32>,

    /// Samples used to estimate Fisher/MAS importance
    #[arg(long, default_value_t = 2000)]
    importance_samples: usize,

    /// Booster architecture for the boosted ensemble
    #[arg(long, value_enum, default_value = "same")]
    booster_arch: BoosterArchArg,

    /// Frosting activation
    #[arg(long, value_enum, default_value = "none")]
    frost_activation: FrostActArg,

    /// Freeze base weights during frosted retraining (frost-only updates)
    #[arg(long, default_value_t = false)]
    freeze_base: bool,

    /// Exclude batch-norm affine parameters from EWC/MAS penalties
    #[arg(long, default_value_t = false)]
    no_penalize_bn: bool,
}

#[derive(Copy, Clone, PartialEq, Eq, Debug, clap::ValueEnum)]
enum BoosterArchArg {
    Same,
    Mlp,
}

#[derive(Copy, Clone, PartialEq, Eq, Debug, clap::ValueEnum)]
enum FrostActArg {
    None,
    Tanh,
}

impl StrategyOpts {
    fn to_config(&self, train: TrainConfig) -> StrategyConfig {
        StrategyConfig {
            lambda_ewc: self.lambda.unwrap_or(self.lambda_ewc),
            lambda_mas: self.lambda.unwrap_or(self.lambda_mas),
            importance_samples: self.importance_samples,
            booster_arch: match self.booster_arch {
                BoosterArchArg::Same => BoosterArch::Same,
                BoosterArchArg::Mlp => BoosterArch::Mlp,
            },
            booster_hidden: 256,
            frost_activation: match self.frost_activation {
                FrostActArg::None => ActKind::None,
                FrostActArg::Tanh => ActKind::Tanh,
            },
            freeze_base_in_frost: self.freeze_base,
            penalize_bn: !self.no_penalize_bn,
            train,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the base model on the protocol's initial set and write its
    /// checkpoint
    Pretrain {
        #[command(flatten)]
        data: DataOpts,

        #[command(flatten)]
        train: TrainOpts,

        /// Output directory
        #[arg(long, default_value = "out")]
        out: PathBuf,

        /// Permit long CIFAR-10 runs
        #[arg(long, default_value_t = false)]
        allow_slow: bool,
    },

    /// Retrain from a base checkpoint under one or more strategies
    Retrain {
        #[command(flatten)]
        data: DataOpts,

        #[command(flatten)]
        train: TrainOpts,

        #[command(flatten)]
        strategy: StrategyOpts,

        /// Base checkpoint path (defaults to the pretrain output location)
        #[arg(long)]
        base: Option<PathBuf>,

        /// Comma-separated strategies to run
        #[arg(
            long = "strategy",
            value_delimiter = ',',
            default_value = "base,scratch,finetune,ewc,mas,boostnet,frostnet"
        )]
        strategy_list: Vec<String>,

        /// Number of seeds per strategy (runs seeds 1..=N)
        #[arg(long, default_value_t = 3)]
        seeds: u64,

        #[arg(long, default_value = "out")]
        out: PathBuf,

        /// Permit long CIFAR-10 runs
        #[arg(long, default_value_t = false)]
        allow_slow: bool,
    },

    /// Aggregate result files into the benchmark table
    Report {
        /// Directory holding result-*.json files
        #[arg(long, default_value = "out")]
        dir: PathBuf,
    },

    /// Verify model gradients against central finite differences
    Gradcheck {
        /// Coordinates sampled per layer type
        #[arg(long, default_value_t = 200)]
        coords: usize,

        #[arg(long, default_value_t = 0)]
        seed: u64,
    },

    /// Fast synthetic end-to-end exercise of every strategy
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn guard_cifar(dataset: Dataset, limit: usize, allow_slow: bool) -> Result<()> {
    if dataset == Dataset::Cifar10 && limit == 0 && !allow_slow {
        return Err(Error::Config(
            "full CIFAR-10 runs take hours on CPU; pass --allow-slow or use --limit".into(),
        ));
    }
    Ok(())
}

fn augment_spec(data: &DataOpts) -> AugmentSpec {
    AugmentSpec {
        discrete_rotation: data.discrete_rotation,
        ..AugmentSpec::default()
    }
}

fn base_ckpt_path(out: &std::path::Path, data: &DataOpts) -> PathBuf {
    out.join(format!(
        "base-{}-{}-seed{}.ckpt",
        data.dataset.name(),
        data.protocol.name(),
        data.seed
    ))
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Pretrain {
            data,
            train,
            out,
            allow_slow,
        } => {
            guard_cifar(data.dataset, data.limit, allow_slow)?;
            let root = dataset::resolve_root(data.data_root.as_deref());
            let loaded = dataset::load(data.dataset, &root, data.seed, data.limit, data.limit_eval)?;
            let protocol = run::build_protocol(data.protocol, &loaded, &augment_spec(&data), data.seed)?;
            let cfg = train.to_config(data.seed);
            let result = run::pretrain(&protocol, &cfg, data.seed)?;
            std::fs::create_dir_all(&out)?;
            let ckpt_path = base_ckpt_path(&out, &data);
            result.checkpoint.save(&ckpt_path)?;
            let hist_path = ckpt_path.with_extension("history.csv");
            std::fs::write(&hist_path, result.history)?;
            let (a_name, b_name) = if data.protocol == ProtocolArg::Split {
                ("classes 0-4", "classes 5-9")
            } else {
                ("original", "augmented")
            };
            println!(
                "base checkpoint: {} ({} epochs run)",
                ckpt_path.display(),
                result.epochs_run
            );
            println!(
                "test accuracy: {a_name} {:.4}, {b_name} {:.4}",
                result.acc_test_a, result.acc_test_b
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Retrain {
            data,
            train,
            strategy,
            base,
            strategy_list,
            seeds,
            out,
            allow_slow,
        } => {
            guard_cifar(data.dataset, data.limit, allow_slow)?;
            let kinds: Vec<StrategyKind> = strategy_list
                .iter()
                .map(|s| s.trim().parse())
                .collect::<Result<_>>()?;
            if kinds.is_empty() {
                return Err(Error::Config("empty strategy list".into()));
            }
            if seeds == 0 {
                return Err(Error::Config("--seeds must be at least 1".into()));
            }
            let root = dataset::resolve_root(data.data_root.as_deref());
            let loaded = dataset::load(data.dataset, &root, data.seed, data.limit, data.limit_eval)?;
            let protocol = run::build_protocol(data.protocol, &loaded, &augment_spec(&data), data.seed)?;

            let needs_base = kinds.iter().any(|k| k.needs_base());
            let ckpt = if needs_base {
                let path = base.unwrap_or_else(|| base_ckpt_path(&out, &data));
                Some(Checkpoint::load(&path).map_err(|e| {
                    Error::Config(format!(
                        "cannot load base checkpoint {} ({e}); run `frostlab pretrain` first",
                        path.display()
                    ))
                })?)
            } else {
                None
            };

            let cfg = strategy.to_config(train.to_config(data.seed));
            let seed_list: Vec<u64> = (1..=seeds).collect();
            run::retrain_grid(
                &protocol,
                data.dataset,
                data.protocol.name(),
                ckpt.as_ref(),
                &kinds,
                &seed_list,
                &cfg,
                &loaded.digest,
                &out,
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { dir } => {
            let rows = report::load_rows(&dir)?;
            let agg = report::aggregate(&rows)?;
            let text = agg.to_text();
            print!("{text}");
            std::fs::write(dir.join("report.txt"), &text)?;
            std::fs::write(dir.join("report.csv"), agg.to_csv())?;
            println!(
                "wrote {} and {}",
                dir.join("report.txt").display(),
                dir.join("report.csv").display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck { coords, seed } => {
            println!("f32 pass (tolerance 1e-2):");
            let f32_audits =
                frostlab::verify::lenet_grad_audit::<f32>(
                    seed,
                    coords,
                    frostlab::autograd::gradcheck::FdOptions::central(1e-5, 1e-5),
                    1e-2,
                )?;
            let mut ok = true;
            for a in &f32_audits {
                let frac = a.pass_fraction();
                ok &= frac >= 0.99;
                println!(
                    "  {:<14} {:>4}/{:<4} within tol ({:.1}%), {} excluded, max rel err {:.3e}",
                    a.layer_type,
                    a.within_tol,
                    a.checked,
                    frac * 100.0,
                    a.excluded,
                    a.max_rel_err
                );
            }
            println!("f64 pass (tolerance 1e-4):");
            let f64_audits =
                frostlab::verify::lenet_grad_audit::<f64>(
                    seed,
                    coords,
                    frostlab::autograd::gradcheck::FdOptions::central(1e-5, 1e-8),
                    1e-4,
                )?;
            for a in &f64_audits {
                let frac = a.pass_fraction();
                ok &= frac >= 0.99;
                println!(
                    "  {:<14} {:>4}/{:<4} within tol ({:.1}%), {} excluded, max rel err {:.3e}",
                    a.layer_type,
                    a.within_tol,
                    a.checked,
                    frac * 100.0,
                    a.excluded,
                    a.max_rel_err
                );
            }
            if ok {
                println!("gradcheck: PASS");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("gradcheck: FAIL");
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Selftest => selftest(),
    }
}

/// Synthetic end-to-end pass over every strategy on generated data.
fn selftest() -> Result<ExitCode> {
    use frostlab::data::{LabeledSet, Provenance};
    use frostlab::rng::SeededRng;
    use frostlab::tensor::Tensor;

    let synth = |n: usize, seed: u64| -> Result<LabeledSet> {
        let mut rng = SeededRng::from_seed(seed);
        // blobs: class k concentrates mass in a class-specific quadrant row
        let mut data = vec![0.0f32; n * 1024];
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = rng.below(10) as u8;
            labels.push(class);
            let img = &mut data[i * 1024..(i + 1) * 1024];
            for y in 0..32 {
                for x in 0..32 {
                    let hot = (y / 4) == class as usize / 2 && (x / 16) == (class as usize % 2);
                    let base = if hot { 0.8 } else { 0.1 };
                    img[y * 32 + x] = (base + rng.range_f32(0.0, 0.2)).clamp(0.0, 1.0);
                }
            }
        }
        LabeledSet::new(Tensor::new(vec![n, 1, 32, 32], data)?, labels, Provenance::Original)
    };

    let train_set = synth(256, 1)?;
    let val = synth(64, 2)?;
    let test = synth(64, 3)?;
    let protocol = frostlab::data::protocol::build_variational_protocol(
        &train_set,
        &val,
        &test,
        &AugmentSpec::default(),
        7,
    )?;
    let tc = TrainConfig {
        max_epochs: 3,
        patience: 2,
        batch_size: 32,
        ..TrainConfig::default()
    };
    let pre = run::pretrain(&protocol, &tc, 7)?;
    println!(
        "selftest pretrain: original {:.3}, augmented {:.3}",
        pre.acc_test_a, pre.acc_test_b
    );
    let cfg = StrategyConfig {
        importance_samples: 32,
        train: tc,
        ..StrategyConfig::default()
    };
    for kind in StrategyKind::ALL {
        let outcome = frostlab::strategies::run_strategy(
            kind,
            Some(&pre.checkpoint),
            &protocol,
            &cfg,
            1,
        )?;
        println!(
            "selftest {:<10} total {:.3} ({} epochs)",
            kind.name(),
            outcome.metrics.acc_total,
            outcome.epochs_run
        );
    }
    println!("selftest: PASS");
    Ok(ExitCode::SUCCESS)
}
