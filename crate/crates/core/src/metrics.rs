//! Efficacy metrics: average gradient, detection success and per-second
//! aggregates.

use crate::classifier::Verdict;
use crate::detector::Detection;
use crate::error::{ensure, Result};
use crate::frame::EventFrame;
use crate::scalar::Real;

/// Mean gradient magnitude over all pixels,
/// `(1/MN) Σ sqrt(fx² + fy²)`, with central differences inside and
/// one-sided differences on the border.
pub fn average_gradient<T: Real>(frame: &EventFrame<T>) -> Result<T> {
    average_gradient_raw(frame.data(), usize::from(frame.width()), usize::from(frame.height()))
}

pub fn average_gradient_raw<T: Real>(data: &[T], width: usize, height: usize) -> Result<T> {
    ensure!(width >= 3 && height >= 3, "average gradient needs at least 3x3, got {width}x{height}");
    ensure!(data.len() == width * height, "data length does not match {width}x{height}");
    let half = T::from_f64_lossy(0.5);
    let at = |x: usize, y: usize| data[y * width + x];
    let deriv = |lo: T, hi: T, central: bool| if central { (hi - lo) * half } else { hi - lo };
    let mut total = T::zero();
    for y in 0..height {
        let (y0, y1) = (y.saturating_sub(1), (y + 1).min(height - 1));
        let y_central = y0 + 2 == y1;
        for x in 0..width {
            let (x0, x1) = (x.saturating_sub(1), (x + 1).min(width - 1));
            let gx = deriv(at(x0, y), at(x1, y), x0 + 2 == x1);
            let gy = deriv(at(x, y0), at(x, y1), y_central);
            total += gx.hypot(gy);
        }
    }
    Ok(total / T::from_usize(width * height).expect("pixel count fits"))
}

/// Fraction of frames with a detected target.
pub fn detection_success(detected: usize, total: usize) -> Result<f64> {
    ensure!(total > 0, "detection success over zero frames");
    ensure!(detected <= total, "detected {detected} exceeds total {total}");
    Ok(detected as f64 / total as f64)
}

/// Everything the controller and reports need from one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRecord {
    pub ag: f64,
    pub verdict: Verdict,
    pub detection: Detection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondSummary {
    pub mean_ag: f64,
    pub flicker_frames: usize,
    pub total_frames: usize,
    pub mean_any_conf: f64,
    pub mean_target_conf: f64,
    pub detection_success: f64,
    /// Bias in force while the frames were captured.
    pub bias_fo: i32,
}

impl SecondSummary {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.total_frames > 0, "summary covers no frames");
        ensure!(
            self.flicker_frames <= self.total_frames,
            "flicker frames {} exceed total {}",
            self.flicker_frames,
            self.total_frames
        );
        for (name, v) in [
            ("mean_any_conf", self.mean_any_conf),
            ("mean_target_conf", self.mean_target_conf),
            ("detection_success", self.detection_success),
        ] {
            ensure!((0.0..=1.0).contains(&v), "{name} = {v} outside [0, 1]");
        }
        ensure!(self.mean_ag.is_finite() && self.mean_ag >= 0.0, "mean AG must be finite and non-negative");
        Ok(())
    }
}

/// Order-independent mean: values are sorted before summation.
fn mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    values.into_iter().sum::<f64>() / n
}

/// Aggregates the frames of one second. The result does not depend on the
/// order of `frames`.
pub fn summarize_second(frames: &[FrameRecord], bias_fo: i32) -> Result<SecondSummary> {
    ensure!(!frames.is_empty(), "cannot summarize an empty second");
    let collect = |f: fn(&FrameRecord) -> f64| frames.iter().map(f).collect::<Vec<_>>();
    let detected = frames.iter().filter(|r| r.detection.detected).count();
    Ok(SecondSummary {
        mean_ag: mean(collect(|r| r.ag)),
        flicker_frames: frames.iter().filter(|r| r.verdict == Verdict::Flicker).count(),
        total_frames: frames.len(),
        mean_any_conf: mean(collect(|r| r.detection.any_conf)),
        mean_target_conf: mean(collect(|r| r.detection.target_conf)),
        detection_success: detection_success(detected, frames.len())?,
        bias_fo,
    })
}
