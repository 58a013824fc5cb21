use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Classifier, ClassifierError, Evaluation};
use crate::adversary::{cost, cost_logit_gradient};
use crate::image::Image;

pub const DEFAULT_HIDDEN: usize = 32;

/// One-hidden-layer perceptron over raw linear pixels:
/// `p = softmax(W2 tanh(W1 x + b1) + b2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyClassifier {
    width: usize,
    height: usize,
    hidden: usize,
    classes: usize,
    /// `hidden × (3·W·H)`, row-major
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// `classes × hidden`, row-major
    w2: Vec<f64>,
    b2: Vec<f64>,
}

/// Parameter gradient of the training loss, laid out like the classifier.
#[derive(Debug, Clone)]
pub(crate) struct ParamGrad {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl ParamGrad {
    fn zeros_like(c: &ToyClassifier) -> Self {
        Self { w1: vec![0.0; c.w1.len()], b1: vec![0.0; c.b1.len()], w2: vec![0.0; c.w2.len()], b2: vec![0.0; c.b2.len()] }
    }
}

struct Activations {
    hidden: Vec<f64>,
    probs: Vec<f64>,
}

impl ToyClassifier {
    pub fn zeros(width: usize, height: usize, hidden: usize, classes: usize) -> Self {
        let d = 3 * width * height;
        Self {
            width,
            height,
            hidden,
            classes,
            w1: vec![0.0; hidden * d],
            b1: vec![0.0; hidden],
            w2: vec![0.0; classes * hidden],
            b2: vec![0.0; classes],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn random(width: usize, height: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let mut c = Self::zeros(width, height, hidden, classes);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = c.input_len();
        let a1 = (6.0 / (d + hidden) as f64).sqrt();
        let a2 = (6.0 / (hidden + classes) as f64).sqrt();
        c.w1.iter_mut().for_each(|w| *w = rng.random_range(-a1..a1));
        c.w2.iter_mut().for_each(|w| *w = rng.random_range(-a2..a2));
        c
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn hidden(&self) -> usize {
        self.hidden
    }
    pub fn classes(&self) -> usize {
        self.classes
    }
    pub fn input_len(&self) -> usize {
        3 * self.width * self.height
    }

    fn check(&self, image: &Image) -> Result<(), ClassifierError> {
        if image.width() != self.width || image.height() != self.height {
            return Err(ClassifierError::Dimensions {
                got_w: image.width(),
                got_h: image.height(),
                want_w: self.width,
                want_h: self.height,
            });
        }
        Ok(())
    }

    fn check_label(&self, label: usize) -> Result<(), ClassifierError> {
        if label >= self.classes {
            return Err(ClassifierError::Label(label, self.classes));
        }
        Ok(())
    }

    fn activations(&self, x: &[f64]) -> Activations {
        let d = self.input_len();
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|h| {
                let row = &self.w1[h * d..(h + 1) * d];
                (self.b1[h] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).tanh()
            })
            .collect();
        let logits: Vec<f64> = (0..self.classes)
            .map(|k| {
                let row = &self.w2[k * self.hidden..(k + 1) * self.hidden];
                self.b2[k] + row.iter().zip(&hidden).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect();
        Activations { hidden, probs: softmax(&logits) }
    }

    /// Class probabilities for an image.
    pub fn forward(&self, image: &Image) -> Result<Vec<f64>, ClassifierError> {
        self.check(image)?;
        Ok(self.activations(image.data()).probs)
    }

    /// Pull a logit-space gradient back through the network to the input.
    fn backprop_input(&self, act: &Activations, dz: &[f64]) -> Vec<f64> {
        let d = self.input_len();
        let mut out = vec![0.0; d];
        for h in 0..self.hidden {
            let dh: f64 = (0..self.classes).map(|k| dz[k] * self.w2[k * self.hidden + h]).sum();
            let da = dh * (1.0 - act.hidden[h] * act.hidden[h]);
            if da == 0.0 {
                continue;
            }
            let row = &self.w1[h * d..(h + 1) * d];
            for (o, w) in out.iter_mut().zip(row) {
                *o += da * w;
            }
        }
        out
    }

    /// `∂C/∂I` for the cost `log p_d − log p_i`.
    pub fn input_grad(&self, image: &Image, decrease: usize, increase: Option<usize>) -> Result<Image, ClassifierError> {
        Ok(self.evaluate_ref(image, decrease, increase)?.gradient)
    }

    pub fn evaluate_ref(&self, image: &Image, decrease: usize, increase: Option<usize>) -> Result<Evaluation, ClassifierError> {
        self.check(image)?;
        self.check_label(decrease)?;
        if let Some(i) = increase {
            self.check_label(i)?;
        }
        let act = self.activations(image.data());
        let c = cost(&act.probs, decrease, increase)?;
        let dz = cost_logit_gradient(&act.probs, decrease, increase);
        let g = self.backprop_input(&act, &dz);
        let gradient = Image::from_data(self.width, self.height, g).expect("gradient matches input size");
        Ok(Evaluation { probabilities: act.probs, cost: c, gradient })
    }

    /// Cross-entropy of one example and its parameter gradient, accumulated
    /// into `grad`.
    /// Cross-entropy against a target putting `1 − smoothing` on `label` and
    /// spreading the rest evenly over all classes.
    pub(crate) fn accumulate_loss_grad(&self, x: &[f64], label: usize, smoothing: f64, grad: &mut ParamGrad) -> f64 {
        let d = self.input_len();
        let act = self.activations(x);
        let off = smoothing / self.classes as f64;
        let target = |k: usize| if k == label { 1.0 - smoothing + off } else { off };
        let loss = -(0..self.classes).map(|k| target(k) * act.probs[k].max(1e-300).ln()).sum::<f64>();
        let dz: Vec<f64> = (0..self.classes).map(|k| act.probs[k] - target(k)).collect();
        for k in 0..self.classes {
            grad.b2[k] += dz[k];
            for h in 0..self.hidden {
                grad.w2[k * self.hidden + h] += dz[k] * act.hidden[h];
            }
        }
        for h in 0..self.hidden {
            let dh: f64 = (0..self.classes).map(|k| dz[k] * self.w2[k * self.hidden + h]).sum();
            let da = dh * (1.0 - act.hidden[h] * act.hidden[h]);
            grad.b1[h] += da;
            if da == 0.0 {
                continue;
            }
            for (g, v) in grad.w1[h * d..(h + 1) * d].iter_mut().zip(x) {
                *g += da * v;
            }
        }
        loss
    }

    pub(crate) fn zero_grad(&self) -> ParamGrad {
        ParamGrad::zeros_like(self)
    }

    /// Momentum SGD update with L2 weight decay on the weight matrices.
    pub(crate) fn apply(&mut self, grad: &ParamGrad, velocity: &mut ParamGrad, lr: f64, momentum: f64, decay: f64, scale: f64) {
        let step = |p: &mut [f64], g: &[f64], v: &mut [f64], wd: f64| {
            for ((p, g), v) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                *v = momentum * *v + g * scale + wd * *p;
                *p -= lr * *v;
            }
        };
        step(&mut self.w1, &grad.w1, &mut velocity.w1, decay);
        step(&mut self.b1, &grad.b1, &mut velocity.b1, 0.0);
        step(&mut self.w2, &grad.w2, &mut velocity.w2, decay);
        step(&mut self.b2, &grad.b2, &mut velocity.b2, 0.0);
    }

    /// Fraction of examples whose argmax matches the label.
    pub fn accuracy<'a>(&self, data: impl IntoIterator<Item = (&'a Image, usize)>) -> f64 {
        let (mut right, mut total) = (0usize, 0usize);
        for (img, label) in data {
            total += 1;
            if let Ok(p) = self.forward(img) {
                right += (super::argmax(&p) == label) as usize;
            }
        }
        if total == 0 {
            0.0
        } else {
            right as f64 / total as f64
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        let text = serde_json::to_string(self).map_err(|e| ClassifierError::Model(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ClassifierError> {
        let c: Self = serde_json::from_str(text).map_err(|e| ClassifierError::Model(e.to_string()))?;
        let d = c.input_len();
        let ok = c.width > 0
            && c.height > 0
            && c.classes > 0
            && c.w1.len() == c.hidden * d
            && c.b1.len() == c.hidden
            && c.w2.len() == c.classes * c.hidden
            && c.b2.len() == c.classes
            && c.w1.iter().chain(&c.b1).chain(&c.w2).chain(&c.b2).all(|v| v.is_finite());
        if !ok {
            return Err(ClassifierError::Model("inconsistent shapes or non-finite weights".into()));
        }
        Ok(c)
    }
}

impl Classifier for ToyClassifier {
    fn num_classes(&self) -> usize {
        self.classes
    }

    fn evaluate(&mut self, image: &Image, decrease: usize, increase: Option<usize>) -> Result<Evaluation, ClassifierError> {
        self.evaluate_ref(image, decrease, increase)
    }
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
