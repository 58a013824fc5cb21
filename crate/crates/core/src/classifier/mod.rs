//! Differentiable classifiers: the built-in toy MLP and a client for
//! external gradient providers speaking the framed binary protocol.

mod external;
pub mod protocol;
mod toy;

pub use external::{serve, ExternalClassifier};
pub use toy::{ToyClassifier, DEFAULT_HIDDEN};
#[cfg(test)]
pub(crate) use toy::softmax;

use thiserror::Error;

use crate::adversary::AdversaryError;
use crate::image::Image;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("image is {got_w}x{got_h} but the classifier expects {want_w}x{want_h}")]
    Dimensions { got_w: usize, got_h: usize, want_w: usize, want_h: usize },
    #[error("label {0} out of range for {1} classes")]
    Label(usize, usize),
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("provider reported failure (status {0})")]
    Provider(u8),
    #[error("provider did not reply within {0:?}")]
    Timeout(std::time::Duration),
    #[error("provider connection closed")]
    Closed,
    #[error("invalid model file: {0}")]
    Model(String),
    #[error(transparent)]
    Cost(#[from] AdversaryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Class distribution, attack cost and `∂C/∂I` for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub probabilities: Vec<f64>,
    pub cost: f64,
    pub gradient: Image,
}

impl Evaluation {
    pub fn argmax(&self) -> usize {
        argmax(&self.probabilities)
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Anything that maps an image to class probabilities and can report the
/// gradient of the attack cost with respect to the image.
pub trait Classifier {
    fn num_classes(&self) -> usize;

    /// Probabilities, cost `log p_d − log p_i` and its image gradient.
    fn evaluate(&mut self, image: &Image, decrease: usize, increase: Option<usize>) -> Result<Evaluation, ClassifierError>;
}
