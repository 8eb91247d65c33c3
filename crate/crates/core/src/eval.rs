//! Evaluation harness: a synthetic labeled dataset, accuracy with and
//! without encryption, the plain-image and random-key attacks, and the
//! equivalence check between a model on plain images and its transformed
//! copy on encrypted images.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::Serialize;

use crate::blockcrypt::{encrypt_image, encrypt_with, schedule_for};
use crate::image::{quantize, Image};
use crate::keyrand::{KeySet, SplitMix64};
use crate::modelcrypt::transform_model;
use crate::vit::{argmax, forward, VitConfig, VitModel};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl LabeledDataset {
    pub fn new(images: Vec<Image>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::LengthMismatch {
                what: "labels",
                expected: images.len(),
                got: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        Ok(Self {
            images,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Amplitude of the uniform noise added to each class pattern.
pub const NOISE_AMPLITUDE: f32 = 0.1;

/// Noise-free pattern of class `class`: an oriented sinusoidal grating
/// whose angle, frequency and per-channel phase depend on the class.
pub fn class_pattern(class: usize, classes: usize, cfg: &VitConfig) -> Image {
    let (w, h, c) = (cfg.width, cfg.height, cfg.channels);
    let angle = core::f32::consts::PI * class as f32 / classes as f32;
    let freq = 1.0 + (class % 3) as f32;
    let (ca, sa) = (libm::cosf(angle), libm::sinf(angle));
    let mut px = Vec::with_capacity(w * h * c);
    for ch in 0..c {
        let phase = if class.is_multiple_of(2) { 1.0 } else { -1.0 } * ch as f32 * 2.0 * core::f32::consts::PI / 3.0;
        for y in 0..h {
            for x in 0..w {
                let u = (x as f32 / w as f32) * ca + (y as f32 / h as f32) * sa;
                let v = 0.5 + 0.35 * libm::sinf(2.0 * core::f32::consts::PI * freq * u + phase);
                px.push(v);
            }
        }
    }
    Image::new(w, h, c, px).expect("pattern dims come from a valid config")
}

/// `n_per_class` noisy copies of each class pattern, classes interleaved,
/// clamped to `[0, 1]` and quantized to the 1/255 grid.
pub fn make_synthetic_dataset(seed: u64, n_per_class: usize, cfg: &VitConfig) -> Result<LabeledDataset> {
    cfg.validate()?;
    if cfg.classes < 2 {
        return Err(Error::InvalidConfig("synthetic dataset needs at least 2 classes".into()));
    }
    let patterns: Vec<Image> = (0..cfg.classes).map(|k| class_pattern(k, cfg.classes, cfg)).collect();
    let mut rng = SplitMix64::new(seed);
    let mut images = Vec::with_capacity(n_per_class * cfg.classes);
    let mut labels = Vec::with_capacity(n_per_class * cfg.classes);
    for _ in 0..n_per_class {
        for (label, base) in patterns.iter().enumerate() {
            let px = base
                .data()
                .iter()
                .map(|&v| quantize((v + rng.symmetric_f32(NOISE_AMPLITUDE)).clamp(0.0, 1.0)))
                .collect();
            images.push(Image::new(cfg.width, cfg.height, cfg.channels, px)?);
            labels.push(label);
        }
    }
    LabeledDataset::new(images, labels, cfg.classes)
}

/// A random image on the 1/255 grid.
pub fn random_image(rng: &mut SplitMix64, cfg: &VitConfig) -> Image {
    let levels: Vec<u8> = (0..cfg.width * cfg.height * cfg.channels)
        .map(|_| (rng.next_u64() >> 56) as u8)
        .collect();
    Image::from_levels(cfg.width, cfg.height, cfg.channels, &levels).expect("dims from a valid config")
}

/// Predicted class per image; each image is encrypted first when `keys` is
/// given, with the model's patch size as block size.
pub fn predictions(model: &VitModel, dataset: &LabeledDataset, keys: Option<&KeySet>) -> Result<Vec<usize>> {
    let block = model.config.patch;
    let schedule = match (keys, dataset.images.first()) {
        (Some(k), Some(first)) => Some(schedule_for(first, k, block)?),
        _ => None,
    };
    dataset
        .images
        .iter()
        .map(|img| {
            let logits = match &schedule {
                Some(s) => forward(model, &encrypt_with(img, block, s)?)?,
                None => forward(model, img)?,
            };
            Ok(argmax(logits.data()))
        })
        .collect()
}

/// Fraction of predictions equal to the labels; 0 for an empty dataset.
pub fn accuracy_of(predictions: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}

pub fn evaluate_accuracy(model: &VitModel, dataset: &LabeledDataset, encrypt_with: Option<&KeySet>) -> Result<f64> {
    Ok(accuracy_of(&predictions(model, dataset, encrypt_with)?, &dataset.labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Equivalence,
    PlainAttack,
    RandomKeyAttack,
    Keyspace,
}

impl ReportKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReportKind::Equivalence => "equivalence",
            ReportKind::PlainAttack => "plain_attack",
            ReportKind::RandomKeyAttack => "random_key_attack",
            ReportKind::Keyspace => "keyspace",
        }
    }
}

/// Machine-readable result of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformReport {
    pub kind: ReportKind,
    pub metrics: BTreeMap<String, f64>,
    pub per_trial: Vec<f64>,
}

impl TransformReport {
    pub fn new(kind: ReportKind) -> Self {
        Self {
            kind,
            metrics: BTreeMap::new(),
            per_trial: Vec::new(),
        }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.metrics.insert(name.to_string(), value);
        self
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }
}

/// Box-plot statistics: quartiles by linear interpolation between order
/// statistics, whiskers at the most extreme data inside
/// `[Q1 − 1.5·IQR, Q3 + 1.5·IQR]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: usize,
}

/// Linear-interpolation quantile of sorted data at `p ∈ [0, 1]`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = libm::ceil(pos) as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let q1 = quantile_sorted(&s, 0.25);
    let q3 = quantile_sorted(&s, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = s.iter().copied().filter(|v| *v >= lo && *v <= hi).collect();
    Some(BoxStats {
        min: s[0],
        q1,
        median: quantile_sorted(&s, 0.5),
        q3,
        max: s[s.len() - 1],
        whisker_low: inside[0],
        whisker_high: inside[inside.len() - 1],
        outliers: s.len() - inside.len(),
    })
}

/// Accuracy of `model_t` on the dataset encrypted with each of `keys`.
pub fn attack_with_keys(model_t: &VitModel, dataset: &LabeledDataset, keys: &[KeySet]) -> Result<TransformReport> {
    let per_trial = keys
        .iter()
        .map(|k| evaluate_accuracy(model_t, dataset, Some(k)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(attack_report(per_trial))
}

/// Builds the random-key report from per-key accuracies.
pub fn attack_report(per_trial: Vec<f64>) -> TransformReport {
    let mut report = TransformReport::new(ReportKind::RandomKeyAttack).with("n_keys", per_trial.len() as f64);
    if let Some(b) = box_stats(&per_trial) {
        let mean = per_trial.iter().sum::<f64>() / per_trial.len() as f64;
        report = report
            .with("min", b.min)
            .with("q1", b.q1)
            .with("median", b.median)
            .with("q3", b.q3)
            .with("max", b.max)
            .with("whisker_low", b.whisker_low)
            .with("whisker_high", b.whisker_high)
            .with("outliers", b.outliers as f64)
            .with("mean", mean);
    }
    report.per_trial = per_trial;
    report
}

/// `n_keys` wrong key sets drawn from `seed`, never equal to `correct`.
pub fn draw_wrong_keys(correct: &KeySet, n_keys: usize, seed: u64) -> Vec<KeySet> {
    let mut rng = SplitMix64::new(seed);
    let mut keys = Vec::with_capacity(n_keys);
    while keys.len() < n_keys {
        let k = KeySet::new(rng.next_u64(), rng.next_u64(), rng.next_u64());
        if k != *correct {
            keys.push(k);
        }
    }
    keys
}

pub fn random_key_attack(
    model_t: &VitModel,
    dataset: &LabeledDataset,
    correct: &KeySet,
    n_keys: usize,
    seed: u64,
) -> Result<TransformReport> {
    if n_keys == 0 {
        return Err(Error::EmptyRange);
    }
    attack_with_keys(model_t, dataset, &draw_wrong_keys(correct, n_keys, seed))
}

/// Baseline on plain images, transformed model on encrypted and on plain
/// images, and whether the first two prediction vectors are identical.
pub fn plain_image_attack(model: &VitModel, dataset: &LabeledDataset, keys: &KeySet) -> Result<TransformReport> {
    let model_t = transform_model(model, keys)?;
    let base = predictions(model, dataset, None)?;
    let enc = predictions(&model_t, dataset, Some(keys))?;
    let plain = predictions(&model_t, dataset, None)?;
    let changed = base.iter().zip(&enc).filter(|(a, b)| a != b).count();
    Ok(TransformReport::new(ReportKind::PlainAttack)
        .with("baseline_plain_accuracy", accuracy_of(&base, &dataset.labels))
        .with("transformed_encrypted_accuracy", accuracy_of(&enc, &dataset.labels))
        .with("transformed_plain_accuracy", accuracy_of(&plain, &dataset.labels))
        .with("prediction_mismatches", changed as f64)
        .with("n_images", dataset.len() as f64))
}

/// Compares `model` on each plain image against its transformed copy on the
/// encrypted image, one key set per pair.
pub fn equivalence_over<I>(model: &VitModel, pairs: I) -> Result<TransformReport>
where
    I: IntoIterator<Item = (KeySet, Image)>,
{
    equivalence_inner(model, pairs.into_iter().map(|(k, img)| (k, k, img)))
}

// Items are (model key, image key, image).
fn equivalence_inner<I>(model: &VitModel, items: I) -> Result<TransformReport>
where
    I: Iterator<Item = (KeySet, KeySet, Image)>,
{
    let mut max_diff = 0.0f64;
    let mut agree = 0usize;
    let mut n = 0usize;
    let mut per_trial = Vec::new();
    let mut cached: Option<(KeySet, VitModel)> = None;
    for (model_keys, image_keys, img) in items {
        if cached.as_ref().map(|(k, _)| *k) != Some(model_keys) {
            cached = Some((model_keys, transform_model(model, &model_keys)?));
        }
        let model_t = &cached.as_ref().expect("set above").1;
        let plain = forward(model, &img)?;
        let enc = forward(model_t, &encrypt_image(&img, &image_keys, model.config.patch)?)?;
        let diff = plain.max_abs_diff(&enc) as f64;
        per_trial.push(diff);
        max_diff = max_diff.max(diff);
        if argmax(plain.data()) == argmax(enc.data()) {
            agree += 1;
        }
        n += 1;
    }
    let agreement = if n == 0 { 1.0 } else { agree as f64 / n as f64 };
    let mut report = TransformReport::new(ReportKind::Equivalence)
        .with("max_abs_logit_diff", max_diff)
        .with("argmax_agreement", agreement)
        .with("n_images", n as f64);
    report.per_trial = per_trial;
    Ok(report)
}

/// Like [`verify_equivalence`], but the model is transformed with
/// `model_keys` while images are encrypted with `image_keys`.
pub fn verify_equivalence_mismatched(
    model: &VitModel,
    model_keys: &KeySet,
    image_keys: &KeySet,
    n_images: usize,
    seed: u64,
) -> Result<TransformReport> {
    let mut rng = SplitMix64::new(seed);
    let cfg = model.config;
    equivalence_inner(
        model,
        (0..n_images).map(|_| (*model_keys, *image_keys, random_image(&mut rng, &cfg))),
    )
}

/// `n_images` random quantized images, all with the same key set.
pub fn verify_equivalence(model: &VitModel, keys: &KeySet, n_images: usize, seed: u64) -> Result<TransformReport> {
    let mut rng = SplitMix64::new(seed);
    let cfg = model.config;
    equivalence_over(model, (0..n_images).map(|_| (*keys, random_image(&mut rng, &cfg))))
}

/// `n_images` random quantized images, each with a freshly drawn key set.
pub fn verify_equivalence_random_keys(model: &VitModel, n_images: usize, seed: u64) -> Result<TransformReport> {
    let mut rng = SplitMix64::new(seed);
    let cfg = model.config;
    equivalence_over(
        model,
        (0..n_images).map(|_| {
            let keys = KeySet::new(rng.next_u64(), rng.next_u64(), rng.next_u64());
            (keys, random_image(&mut rng, &cfg))
        }),
    )
}
