//! Command-line front-end. Every subcommand writes machine-readable JSON to
//! stdout; progress and diagnostics go to stderr.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use blockvit_core::blockcrypt::{decrypt_image, encrypt_image};
use blockvit_core::eval::{
    draw_wrong_keys, evaluate_accuracy, make_synthetic_dataset, plain_image_attack, random_key_attack,
    verify_equivalence, verify_equivalence_random_keys, LabeledDataset,
};
use blockvit_core::keyrand::SplitMix64;
use blockvit_core::keyspace::keyspace;
use blockvit_core::modelcrypt::{derive_transform, transform_model, untransform_model_with};
use blockvit_core::train::{train_toy, TrainConfig};
use blockvit_core::vit::{argmax, forward, random_init};
use blockvit_core::{KeySet, VitConfig, VitModel};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dataset::{load_dataset, save_dataset};
use crate::keyfile::{keys_from_json, keys_to_json};
use crate::ppm::{read_ppm, write_ppm};
use crate::report::{report_json, write_attack_csv};
use crate::weights::{load_model, save_model};

#[derive(Debug, Parser)]
#[command(name = "blockvit", version, about = "Block-wise keyed image encryption for ViT inference")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a key file from a master seed or three explicit sub-keys.
    Keygen(KeygenArgs),
    /// Encrypt a PPM image block-wise.
    Encrypt(CryptArgs),
    /// Undo `encrypt` with the same keys and block size.
    Decrypt(CryptArgs),
    /// Permute and sign-flip a model's embeddings for a key set.
    TransformModel(TransformArgs),
    /// Logits and predicted class for one image.
    Infer(InferArgs),
    /// Compare a model on plain images with its transformed copy on encrypted ones.
    VerifyEquivalence(VerifyArgs),
    /// Random-key or plain-image attack on a transformed model.
    Attack(AttackArgs),
    /// Exact key-space size for an image geometry.
    Keyspace(KeyspaceArgs),
    /// Train the default-config ViT on the synthetic dataset.
    TrainToy(TrainArgs),
}

#[derive(Debug, Args)]
pub struct KeygenArgs {
    /// Master seed; three SplitMix64 steps give k1, k2, k3.
    #[arg(long, conflicts_with_all = ["k1", "k2", "k3"], required_unless_present_all = ["k1", "k2", "k3"])]
    pub seed: Option<u64>,
    #[arg(long, requires_all = ["k2", "k3"])]
    pub k1: Option<u64>,
    #[arg(long, requires_all = ["k1", "k3"])]
    pub k2: Option<u64>,
    #[arg(long, requires_all = ["k1", "k2"])]
    pub k3: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CryptArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub keys: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub block: usize,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub keys: PathBuf,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Untransformed model.
    #[arg(long)]
    pub model: PathBuf,
    /// Key file; without it every image gets a freshly drawn key set.
    #[arg(long)]
    pub keys: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AttackMode {
    /// Encrypt the dataset with wrong keys.
    RandomKey,
    /// Feed plain images to the transformed model.
    Plain,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    /// Transformed model.
    #[arg(long)]
    pub model: PathBuf,
    /// Directory laid out as `<class_index>/<name>.ppm`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// The correct key set; never drawn as a wrong key.
    #[arg(long)]
    pub keys: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub n_keys: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = AttackMode::RandomKey)]
    pub mode: AttackMode,
    /// Per-key CSV; defaults to the model path with extension `attack.csv`.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KeyspaceArgs {
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    #[arg(long)]
    pub block: usize,
    #[arg(long)]
    pub channels: usize,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f32,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f32,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Training images per class.
    #[arg(long, default_value_t = 10)]
    pub n_per_class: usize,
    /// Held-out test images per class.
    #[arg(long, default_value_t = 20)]
    pub test_per_class: usize,
    /// Also write the held-out test set as `<dir>/<class>/<index>.ppm`.
    #[arg(long)]
    pub export_test: Option<PathBuf>,
}

/// What `train-toy` prints.
#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub out: String,
    pub epochs: usize,
    pub epoch_loss: Vec<f32>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Seeds for model init, training data, test data and sample order, all
/// drawn from the one `--seed`.
pub struct ToySeeds {
    pub init: u64,
    pub train_data: u64,
    pub test_data: u64,
    pub order: u64,
}

impl ToySeeds {
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        Self {
            init: rng.next_u64(),
            train_data: rng.next_u64(),
            test_data: rng.next_u64(),
            order: rng.next_u64(),
        }
    }
}

/// The `train-toy` experiment without file output: returns the trained
/// model, its summary and the held-out test set.
pub fn train_toy_experiment(args: &TrainArgs) -> Result<(VitModel, TrainSummary, LabeledDataset)> {
    let cfg = VitConfig::default();
    let seeds = ToySeeds::from_seed(args.seed);
    let train = make_synthetic_dataset(seeds.train_data, args.n_per_class, &cfg)?;
    let test = make_synthetic_dataset(seeds.test_data, args.test_per_class, &cfg)?;
    if train.is_empty() {
        bail!("--n-per-class must be at least 1");
    }
    let model = random_init(cfg, seeds.init)?;
    let tc = TrainConfig {
        epochs: args.epochs,
        lr: args.lr,
        momentum: args.momentum,
        batch_size: args.batch_size,
        seed: seeds.order,
    };
    let (trained, log) = train_toy(&model, &train, &tc)?;
    let summary = TrainSummary {
        out: args.out.display().to_string(),
        epochs: args.epochs,
        epoch_loss: log.epoch_loss,
        train_accuracy: evaluate_accuracy(&trained, &train, None)?,
        test_accuracy: if test.is_empty() { 0.0 } else { evaluate_accuracy(&trained, &test, None)? },
        n_train: train.len(),
        n_test: test.len(),
    };
    Ok((trained, summary, test))
}

fn read_keys(path: &Path) -> Result<KeySet> {
    let text = fs::read_to_string(path).with_context(|| format!("reading key file {}", path.display()))?;
    keys_from_json(&text).with_context(|| format!("parsing key file {}", path.display()))
}

fn read_model(path: &Path) -> Result<VitModel> {
    let bytes = fs::read(path).with_context(|| format!("reading model {}", path.display()))?;
    load_model(&bytes).with_context(|| format!("loading model {}", path.display()))
}

fn read_image(path: &Path) -> Result<blockvit_core::Image> {
    let bytes = fs::read(path).with_context(|| format!("reading image {}", path.display()))?;
    read_ppm(&bytes).with_context(|| format!("decoding image {}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn emit<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

/// Runs one invocation; the returned value is the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::Keygen(a) => {
            let keys = match (a.seed, a.k1, a.k2, a.k3) {
                (Some(seed), ..) => KeySet::from_master_seed(seed),
                (None, Some(k1), Some(k2), Some(k3)) => KeySet::new(k1, k2, k3),
                _ => bail!("give --seed or all of --k1 --k2 --k3"),
            };
            let text = keys_to_json(&keys);
            write_file(&a.out, format!("{text}\n").as_bytes())?;
            writeln!(out, "{text}")?;
        }
        Command::Encrypt(a) => crypt(&a, true, out)?,
        Command::Decrypt(a) => crypt(&a, false, out)?,
        Command::TransformModel(a) => {
            let model = read_model(&a.input)?;
            let keys = read_keys(&a.keys)?;
            let t = transform_model(&model, &keys)?;
            write_file(&a.out, &save_model(&t))?;
            eprintln!("transformed {} -> {}", a.input.display(), a.out.display());
            emit(
                out,
                &serde_json::json!({
                    "out": a.out.display().to_string(),
                    "block": model.config.patch,
                    "parameters": t.num_parameters(),
                }),
            )?;
        }
        Command::Infer(a) => {
            let model = read_model(&a.model)?;
            let img = read_image(&a.image)?;
            let logits = forward(&model, &img)?;
            emit(
                out,
                &serde_json::json!({
                    "logits": logits.data(),
                    "argmax": argmax(logits.data()),
                }),
            )?;
        }
        Command::VerifyEquivalence(a) => {
            let model = read_model(&a.model)?;
            let report = match &a.keys {
                Some(p) => verify_equivalence(&model, &read_keys(p)?, a.n, a.seed)?,
                None => verify_equivalence_random_keys(&model, a.n, a.seed)?,
            };
            writeln!(out, "{}", report_json(&report))?;
            let diff = report.metric("max_abs_logit_diff").unwrap_or(f64::INFINITY);
            if diff > a.tol {
                eprintln!("max logit difference {diff:e} exceeds tolerance {:e}", a.tol);
                return Ok(1);
            }
            eprintln!("equivalent: max logit difference {diff:e} <= {:e}", a.tol);
        }
        Command::Attack(a) => attack(&a, out)?,
        Command::Keyspace(a) => {
            emit(out, &keyspace(a.block, a.channels, a.width, a.height)?)?;
        }
        Command::TrainToy(a) => {
            let (model, summary, test) = train_toy_experiment(&a)?;
            write_file(&a.out, &save_model(&model))?;
            if let Some(dir) = &a.export_test {
                save_dataset(&test, dir)?;
            }
            eprintln!(
                "trained {} epochs: train accuracy {:.3}, test accuracy {:.3}",
                a.epochs, summary.train_accuracy, summary.test_accuracy
            );
            emit(out, &summary)?;
        }
    }
    Ok(0)
}

fn crypt(a: &CryptArgs, encrypt: bool, out: &mut dyn Write) -> Result<()> {
    let img = read_image(&a.input)?;
    let keys = read_keys(&a.keys)?;
    let result = if encrypt {
        encrypt_image(&img, &keys, a.block)?
    } else {
        decrypt_image(&img, &keys, a.block)?
    };
    write_file(&a.out, &write_ppm(&result)?)?;
    emit(
        out,
        &serde_json::json!({
            "out": a.out.display().to_string(),
            "width": result.width(),
            "height": result.height(),
            "block": a.block,
        }),
    )
}

fn attack(a: &AttackArgs, out: &mut dyn Write) -> Result<()> {
    let model_t = read_model(&a.model)?;
    let keys = read_keys(&a.keys)?;
    let data = load_dataset(&a.dataset)?;
    match a.mode {
        AttackMode::Plain => {
            let baseline = untransform_model_with(&model_t, &derive_transform(&keys, &model_t.config)?)?;
            let report = plain_image_attack(&baseline, &data, &keys)?;
            writeln!(out, "{}", report_json(&report))?;
        }
        AttackMode::RandomKey => {
            let correct = evaluate_accuracy(&model_t, &data, Some(&keys))?;
            let report = random_key_attack(&model_t, &data, &keys, a.n_keys, a.seed)?;
            let below = report.per_trial.iter().filter(|&&v| v < correct).count();
            let report = report
                .with("correct_key_accuracy", correct)
                .with("wrong_keys_below_correct", below as f64);
            let csv_path = a.csv.clone().unwrap_or_else(|| a.model.with_extension("attack.csv"));
            let file = fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
            write_attack_csv(&report, &draw_wrong_keys(&keys, a.n_keys, a.seed), file)?;
            eprintln!("per-key accuracies written to {}", csv_path.display());
            writeln!(out, "{}", report_json(&report))?;
        }
    }
    Ok(())
}
