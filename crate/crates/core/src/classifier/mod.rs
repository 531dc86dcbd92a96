//! Per-frame flicker classification: the CNN, its training loop and an
//! independent spectral check on event rates.

pub mod cnn;
pub mod spectral;
pub mod train;

pub use cnn::{Architecture, CnnParams, Workspace};
pub use spectral::spectral_oracle;
pub use train::{train, TrainConfig, TrainOutcome};

use crate::error::Result;
use crate::frame::{to_classifier_input, EventFrame};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    NoFlicker,
    Flicker,
}

impl Verdict {
    /// Class index used by the network (0 = no flicker, 1 = flicker).
    pub fn index(self) -> usize {
        match self {
            Verdict::NoFlicker => 0,
            Verdict::Flicker => 1,
        }
    }

    pub fn from_flag(flicker: bool) -> Self {
        if flicker {
            Verdict::Flicker
        } else {
            Verdict::NoFlicker
        }
    }

    pub fn is_flicker(self) -> bool {
        self == Verdict::Flicker
    }
}

/// Argmax of the logits; a tie counts as no flicker.
pub fn classify<T: Real>(params: &CnnParams<T>, frame: &EventFrame<T>) -> Result<Verdict> {
    let input = to_classifier_input(frame)?;
    Ok(train::predict(params.forward(&input)?))
}

/// Anything that can label a frame for the control loop.
pub trait FrameClassifier {
    fn classify(&mut self, frame: &EventFrame<f32>) -> Result<Verdict>;
}

impl<F: FnMut(&EventFrame<f32>) -> Result<Verdict>> FrameClassifier for F {
    fn classify(&mut self, frame: &EventFrame<f32>) -> Result<Verdict> {
        self(frame)
    }
}

/// The CNN with a reusable workspace.
pub struct CnnClassifier<T> {
    params: CnnParams<T>,
    ws: Workspace<T>,
    input: Vec<T>,
}

impl<T: Real> CnnClassifier<T> {
    pub fn new(params: CnnParams<T>) -> Self {
        let ws = Workspace::new(params.architecture());
        Self { params, ws, input: Vec::new() }
    }

    pub fn params(&self) -> &CnnParams<T> {
        &self.params
    }

    pub fn logits(&mut self, frame: &EventFrame<f32>) -> Result<[T; 2]> {
        self.input = to_classifier_input(&frame.cast::<T>())?;
        self.params.forward_with(&self.input, &mut self.ws)
    }
}

impl<T: Real> FrameClassifier for CnnClassifier<T> {
    fn classify(&mut self, frame: &EventFrame<f32>) -> Result<Verdict> {
        self.logits(frame).map(train::predict)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_with_conservative_ties() {
        assert_eq!(train::predict([0.0f32, 0.0]), Verdict::NoFlicker);
        assert_eq!(train::predict([-1.0f32, 2.0]), Verdict::Flicker);
        assert_eq!(train::predict([2.0f32, -1.0]), Verdict::NoFlicker);
    }

    #[test]
    fn zero_network_never_flags_flicker() {
        let params = CnnParams::<f32>::zeros(Architecture::STANDARD).unwrap();
        let mut frame = EventFrame::<f32>::zeros(128, 128);
        frame.set(10, 10, 2.0);
        assert_eq!(classify(&params, &frame).unwrap(), Verdict::NoFlicker);
    }
}
