//! Minibatch training of the toy classifier, optionally injecting renders
//! under random or adversarial lighting every epoch.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{run_attack, AdversaryError, AttackConfig, AttackScene, ParamSpace, SceneLighting};
use crate::classifier::ToyClassifier;
use crate::image::Image;
use crate::lighting::ShCoeffs;

/// Random lighting offsets are drawn uniformly from `[−r, r]` per coefficient.
pub const RANDOM_LIGHTING_RANGE: f64 = 0.5;
/// Renders injected per epoch by the augmentation modes.
pub const DEFAULT_INJECT: usize = 100;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("augmentation needs a non-empty scene bank")]
    EmptyBank,
    #[error("example is {0}x{1}, classifier expects {2}x{3}")]
    Dimensions(usize, usize, usize, usize),
    #[error("label {0} out of range for {1} classes")]
    Label(usize, usize),
    #[error(transparent)]
    Attack(#[from] AdversaryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Augmentation {
    None,
    RandomLighting,
    AdversarialLighting,
}

impl std::str::FromStr for Augmentation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Self::None),
            "random" | "random-lighting" => Ok(Self::RandomLighting),
            "adversarial" | "adversarial-lighting" => Ok(Self::AdversarialLighting),
            other => Err(format!("unknown augmentation '{other}'")),
        }
    }
}

/// A scene with its ground-truth label, used to synthesise augmentation renders.
#[derive(Debug, Clone)]
pub struct LabeledScene {
    pub scene: AttackScene,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Probability mass moved off the true label in the training target.
    pub label_smoothing: f64,
    pub augmentation: Augmentation,
    pub inject: usize,
    pub attack_step: f64,
    pub attack_iterations: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 16,
            learning_rate: 0.02,
            momentum: 0.9,
            weight_decay: 1e-4,
            label_smoothing: 0.2,
            augmentation: Augmentation::None,
            inject: DEFAULT_INJECT,
            attack_step: crate::adversary::DEFAULT_STEP_SIZE,
            attack_iterations: crate::adversary::DEFAULT_MAX_ITERATIONS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Accuracy on the base training set after each epoch.
    pub accuracy: Vec<f64>,
    /// Mean cross-entropy over each epoch's examples.
    pub loss: Vec<f64>,
    /// Renders injected in each epoch.
    pub injected: Vec<usize>,
}

/// `lighting + U[−range, range]` per coefficient.
pub fn random_lighting(base: &ShCoeffs, range: f64, rng: &mut impl Rng) -> ShCoeffs {
    let data = base.data().iter().map(|v| v + rng.random_range(-range..=range)).collect();
    ShCoeffs::from_data(base.bands(), data).expect("finite offsets")
}

fn relit(scene: &AttackScene, u: ShCoeffs) -> AttackScene {
    AttackScene { lighting: SceneLighting::Sh(u), ..scene.clone() }
}

fn inject(
    clf: &ToyClassifier,
    bank: &[LabeledScene],
    opts: &TrainOptions,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(Image, usize)>, TrainError> {
    let mut out = Vec::with_capacity(opts.inject);
    if opts.augmentation == Augmentation::None {
        return Ok(out);
    }
    for _ in 0..opts.inject {
        let item = &bank[rng.random_range(0..bank.len())];
        let base = item.scene.lighting.coefficients();
        let scene = match opts.augmentation {
            Augmentation::None => unreachable!("handled above"),
            Augmentation::RandomLighting => relit(&item.scene, random_lighting(&base, RANDOM_LIGHTING_RANGE, rng)),
            Augmentation::AdversarialLighting => {
                let config = AttackConfig {
                    step_size: opts.attack_step,
                    max_iterations: opts.attack_iterations,
                    ..AttackConfig::new(ParamSpace::Lighting, item.label, f64::INFINITY)
                };
                let mut c = clf.clone();
                run_attack(&relit(&item.scene, base), &mut c, &config)?.scene
            }
        };
        for img in scene.render_all()? {
            out.push((img, item.label));
        }
    }
    Ok(out)
}

/// Train with momentum SGD on cross-entropy. Augmentation modes regenerate
/// their injected renders at the start of every epoch from `bank`, attacking
/// the current weights in adversarial mode.
pub fn train_toy(
    clf: &ToyClassifier,
    data: &[(Image, usize)],
    bank: &[LabeledScene],
    opts: &TrainOptions,
) -> Result<(ToyClassifier, TrainReport), TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if opts.augmentation != Augmentation::None && opts.inject > 0 && bank.is_empty() {
        return Err(TrainError::EmptyBank);
    }
    for (img, label) in data {
        if img.width() != clf.width() || img.height() != clf.height() {
            return Err(TrainError::Dimensions(img.width(), img.height(), clf.width(), clf.height()));
        }
        if *label >= clf.classes() {
            return Err(TrainError::Label(*label, clf.classes()));
        }
    }
    let mut model = clf.clone();
    let mut velocity = model.zero_grad();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = TrainReport::default();
    for _ in 0..opts.epochs {
        let extra = inject(&model, bank, opts, &mut rng)?;
        report.injected.push(extra.len());
        let mut order: Vec<(&Image, usize)> = data.iter().chain(&extra).map(|(i, l)| (i, *l)).collect();
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        for batch in order.chunks(opts.batch_size.max(1)) {
            let mut grad = model.zero_grad();
            for (img, label) in batch {
                total_loss += model.accumulate_loss_grad(img.data(), *label, opts.label_smoothing, &mut grad);
            }
            model.apply(&grad, &mut velocity, opts.learning_rate, opts.momentum, opts.weight_decay, 1.0 / batch.len() as f64);
        }
        report.loss.push(total_loss / order.len() as f64);
        report.accuracy.push(model.accuracy(data.iter().map(|(i, l)| (i, *l))));
    }
    Ok((model, report))
}
