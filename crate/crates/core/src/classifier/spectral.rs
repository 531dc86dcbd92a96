//! Frequency-domain flicker check on an event-rate series, independent of
//! the CNN.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::Verdict;
use crate::error::{ensure, Result};

pub const RATE_BINS: usize = 1000;
pub const BAND_HZ: (usize, usize) = (20, 500);
pub const PEAK_RATIO: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralReport {
    pub verdict: Verdict,
    /// Frequency of the strongest in-band bin, Hz.
    pub peak_hz: usize,
    pub peak_magnitude: f64,
    pub median_magnitude: f64,
}

/// Spectrum of 1 s of per-millisecond event counts. Bin `k` is `k` Hz.
pub fn analyze(event_rate: &[f64]) -> Result<SpectralReport> {
    ensure!(event_rate.len() == RATE_BINS, "expected {RATE_BINS} rate bins, got {}", event_rate.len());
    ensure!(event_rate.iter().all(|v| v.is_finite()), "non-finite event rate");
    let mean = event_rate.iter().sum::<f64>() / RATE_BINS as f64;
    let mut buf: Vec<Complex<f64>> = event_rate.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(RATE_BINS).process(&mut buf);

    let band: Vec<f64> = buf[BAND_HZ.0..=BAND_HZ.1].iter().map(|c| c.norm()).collect();
    let (peak_idx, peak) = band
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    let mut sorted = band.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    // A flat spectrum has median zero and no peak either.
    let verdict = if peak > PEAK_RATIO * median && peak > 1e-9 { Verdict::Flicker } else { Verdict::NoFlicker };
    Ok(SpectralReport { verdict, peak_hz: BAND_HZ.0 + peak_idx, peak_magnitude: peak, median_magnitude: median })
}

/// Flicker iff some magnitude between 20 and 500 Hz exceeds 8x the in-band median.
pub fn spectral_oracle(event_rate: &[f64]) -> Result<Verdict> {
    analyze(event_rate).map(|r| r.verdict)
}
