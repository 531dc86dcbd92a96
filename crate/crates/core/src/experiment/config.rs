use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::pixel::{bias_to_cutoff, BIAS_MAX};
use crate::scene::LuxPreset;

/// Shortest run for which "first second" and "final ten seconds" are
/// disjoint with room for the controller to act.
pub const MIN_DURATION_S: u32 = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub frequencies: Vec<f64>,
    pub lux: Vec<LuxPreset>,
    pub duration_s: u32,
    pub seed: u64,
    /// Side of the square sensor, pixels.
    pub resolution: u16,
    pub initial_bias: i32,
    /// Flicker peak relative to the ambient level.
    pub flicker_amplitude: f64,
    /// Adds one flicker-free row per lux preset to the grid.
    pub control: bool,
    pub out_dir: PathBuf,
    /// Where `EVT1` logs go; `None` disables them.
    pub events_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            frequencies: vec![25.0, 50.0, 150.0, 300.0, 500.0],
            lux: vec![LuxPreset::High, LuxPreset::Low],
            duration_s: 60,
            seed: 1,
            resolution: 128,
            initial_bias: BIAS_MAX,
            flicker_amplitude: 0.4,
            control: true,
            out_dir: PathBuf::from("out"),
            events_dir: None,
        }
    }
}

fn bad(reason: impl Into<String>) -> Error {
    Error::Format { format: "config", reason: reason.into() }
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(format!("{key}: cannot parse {value:?}")))
}

pub fn parse_lux(value: &str) -> Result<LuxPreset> {
    match value.trim().to_ascii_lowercase().as_str() {
        "high" => Ok(LuxPreset::High),
        "low" => Ok(LuxPreset::Low),
        other => other
            .parse::<f64>()
            .ok()
            .and_then(LuxPreset::from_lux)
            .ok_or_else(|| bad(format!("unknown lux preset {other:?} (use high, low, 1000 or 20)"))),
    }
}

fn list<T>(value: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(parse).collect()
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        crate::error::ensure!(!self.frequencies.is_empty(), "no flicker frequencies configured");
        for &f in &self.frequencies {
            crate::error::ensure!((1.0..=1000.0).contains(&f), "flicker frequency {f} Hz outside [1, 1000]");
        }
        crate::error::ensure!(!self.lux.is_empty(), "no lux presets configured");
        crate::error::ensure!(
            self.duration_s >= MIN_DURATION_S,
            "duration {} s is shorter than {MIN_DURATION_S} s",
            self.duration_s
        );
        crate::error::ensure!(
            (32..=224).contains(&self.resolution),
            "resolution {} outside [32, 224]",
            self.resolution
        );
        bias_to_cutoff(self.initial_bias)?;
        crate::error::ensure!(
            self.flicker_amplitude.is_finite() && self.flicker_amplitude >= 0.0,
            "flicker amplitude must be non-negative"
        );
        Ok(())
    }

    /// Sets one `key = value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "frequencies" | "freq" => self.frequencies = list(value, |s| number("frequencies", s))?,
            "lux" => self.lux = list(value, parse_lux)?,
            "duration" => self.duration_s = number(key, value)?,
            "seed" => self.seed = number(key, value)?,
            "resolution" => self.resolution = number(key, value)?,
            "bias_init" => self.initial_bias = number(key, value)?,
            "amplitude" => self.flicker_amplitude = number(key, value)?,
            "control" => self.control = number(key, value)?,
            "out" => self.out_dir = PathBuf::from(value),
            "events_out" => self.events_dir = Some(PathBuf::from(value)),
            other => return Err(bad(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file on top of `self`. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| bad(format!("line {}: expected key = value", n + 1)))?;
            self.set(key, value).map_err(|e| match e {
                Error::Format { reason, .. } => bad(format!("line {}: {reason}", n + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }
}

/// Deterministic child seed; keeps runs independent of iteration order.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
