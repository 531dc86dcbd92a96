pub mod classifier;
pub mod controller;
pub mod detector;
pub mod error;
pub mod event;
pub mod experiment;
pub mod formats;
pub mod frame;
pub mod metrics;
pub mod pipeline;
pub mod pixel;
pub mod scalar;
pub mod scene;

pub use error::{Error, Result};
pub use event::{Event, Polarity};
pub use scalar::Real;

/// Network parameters in the precision used for inference.
pub type Cnn32 = classifier::CnnParams<f32>;
/// Network parameters in double precision, for gradient checks.
pub type Cnn64 = classifier::CnnParams<f64>;
pub type Frame32 = frame::EventFrame<f32>;
pub type Frame64 = frame::EventFrame<f64>;
pub type Sensor32 = pixel::Sensor<f32>;
pub type Sensor64 = pixel::Sensor<f64>;
