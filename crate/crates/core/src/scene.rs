//! Ground-truth irradiance: ambient light, a global flickering source and a
//! moving ring-textured disc that stands in for a face.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Result};

/// Irradiance floor so that log-intensity is always defined.
pub const IRRADIANCE_FLOOR: f64 = 1e-6;

/// Irradiance units per lux (1000 lux maps to 1.0).
pub const IRRADIANCE_PER_LUX: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Waveform {
    /// `max(0, sin)`, the shape of an LED driven straight from AC.
    HalfRectifiedSine,
    Square,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlickerConfig {
    pub enabled: bool,
    /// Hz.
    pub frequency: f64,
    pub waveform: Waveform,
    /// Peak modulation relative to the unflickered irradiance.
    pub amplitude: f64,
    /// Radians.
    pub phase: f64,
}

impl FlickerConfig {
    pub fn off() -> Self {
        Self { enabled: false, frequency: 50.0, waveform: Waveform::HalfRectifiedSine, amplitude: 0.0, phase: 0.0 }
    }

    pub fn half_sine(frequency: f64, amplitude: f64) -> Self {
        Self { enabled: true, frequency, waveform: Waveform::HalfRectifiedSine, amplitude, phase: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.enabled {
            ensure!(
                (1.0..=1000.0).contains(&self.frequency),
                "flicker frequency {} Hz outside [1, 1000]",
                self.frequency
            );
        }
        ensure!(
            self.amplitude.is_finite() && self.amplitude >= 0.0,
            "flicker amplitude must be finite and non-negative, got {}",
            self.amplitude
        );
        ensure!(self.phase.is_finite(), "flicker phase must be finite");
        Ok(())
    }

    /// Waveform value in `[0, 1]` at time `t` (zero when disabled).
    pub fn waveform_at(&self, t: f64) -> f64 {
        if !self.enabled || self.amplitude == 0.0 {
            return 0.0;
        }
        // Reduce to a fractional cycle first so one period later lands on
        // the same phase.
        let cycles = self.frequency * t;
        let frac = cycles - cycles.floor();
        match self.waveform {
            Waveform::HalfRectifiedSine => (TAU * frac + self.phase).sin().max(0.0),
            Waveform::Square => {
                let shifted = frac + self.phase / TAU;
                if shifted - shifted.floor() < 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Multiplicative illumination factor `1 + amplitude * waveform(t)`.
    pub fn factor(&self, t: f64) -> f64 {
        1.0 + self.amplitude * self.waveform_at(t)
    }
}

impl Default for FlickerConfig {
    fn default() -> Self {
        Self::off()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LuxPreset {
    /// Well-lit office, 1000 lux.
    High,
    /// Dim room, 20 lux.
    Low,
}

impl LuxPreset {
    pub fn lux(self) -> f64 {
        match self {
            LuxPreset::High => 1000.0,
            LuxPreset::Low => 20.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LuxPreset::High => "high",
            LuxPreset::Low => "low",
        }
    }

    pub fn from_lux(lux: f64) -> Option<Self> {
        if lux == 1000.0 {
            Some(LuxPreset::High)
        } else if lux == 20.0 {
            Some(LuxPreset::Low)
        } else {
            None
        }
    }
}

/// Parametric path of the target centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Trajectory {
    Static { center: (f64, f64) },
    /// `x = cx + ax sin(2πt/T + φ)`, `y = cy + ay cos(2πt/T + φ)`; the
    /// quarter-period offset between axes keeps the speed non-zero.
    Sweep { center: (f64, f64), amplitude: (f64, f64), period: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetConfig {
    pub trajectory: Trajectory,
    /// Disc radius in pixels.
    pub radius: f64,
    /// Peak relative modulation of the ring texture, in `[0, 1)`.
    pub contrast: f64,
    pub rings: u32,
}

impl TargetConfig {
    pub fn centered_sweep(width: u16, height: u16) -> Self {
        let center = (f64::from(width) / 2.0, f64::from(height) / 2.0);
        let scale = f64::from(width.min(height)) / 128.0;
        Self {
            trajectory: Trajectory::Sweep { center, amplitude: (24.0 * scale, 16.0 * scale), period: 10.0 },
            radius: 20.0 * scale,
            contrast: 0.2,
            rings: 3,
        }
    }

    /// Texture modulation at distance `r` from the centre (zero outside).
    pub fn modulation(&self, r: f64) -> f64 {
        if r > self.radius {
            0.0
        } else {
            self.contrast * (TAU * f64::from(self.rings) * r / self.radius).cos()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub width: u16,
    pub height: u16,
    pub ambient_lux: f64,
    pub target: Option<TargetConfig>,
    pub seed: u64,
}

impl SceneConfig {
    pub fn new(width: u16, height: u16, lux: LuxPreset, seed: u64) -> Self {
        Self { width, height, ambient_lux: lux.lux(), target: Some(TargetConfig::centered_sweep(width, height)), seed }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.width >= 32 && self.height >= 32, "scene must be at least 32x32, got {}x{}", self.width, self.height);
        ensure!(self.ambient_lux.is_finite() && self.ambient_lux > 0.0, "ambient lux must be positive");
        if let Some(target) = &self.target {
            ensure!(target.radius > 0.0, "target radius must be positive");
            ensure!((0.0..1.0).contains(&target.contrast), "target contrast must lie in [0, 1)");
            if let Trajectory::Sweep { period, .. } = target.trajectory {
                ensure!(period > 0.0, "sweep period must be positive");
            }
        }
        Ok(())
    }
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self::new(128, 128, LuxPreset::High, 0)
    }
}

/// A validated scene plus flicker source.
#[derive(Debug, Clone)]
pub struct Scene {
    config: SceneConfig,
    flicker: FlickerConfig,
    ambient: f64,
    sweep_phase: f64,
}

impl Scene {
    pub fn new(config: SceneConfig, flicker: FlickerConfig) -> Result<Self> {
        config.validate()?;
        flicker.validate()?;
        // The seed only picks where along its path the target starts.
        let sweep_phase = ChaCha8Rng::seed_from_u64(config.seed).gen_range(0.0..TAU);
        Ok(Self { config, flicker, ambient: config.ambient_lux * IRRADIANCE_PER_LUX, sweep_phase })
    }

    pub fn config(&self) -> &SceneConfig {
        &self.config
    }

    pub fn flicker(&self) -> &FlickerConfig {
        &self.flicker
    }

    pub fn width(&self) -> u16 {
        self.config.width
    }

    pub fn height(&self) -> u16 {
        self.config.height
    }

    /// Irradiance of the unflickered background.
    pub fn ambient(&self) -> f64 {
        self.ambient
    }

    pub fn target_center(&self, t: f64) -> Option<(f64, f64)> {
        let target = self.config.target.as_ref()?;
        Some(match target.trajectory {
            Trajectory::Static { center } => center,
            Trajectory::Sweep { center, amplitude, period } => {
                let angle = TAU * t / period + self.sweep_phase;
                (center.0 + amplitude.0 * angle.sin(), center.1 + amplitude.1 * angle.cos())
            }
        })
    }

    /// Irradiance without the flicker factor.
    pub fn base_at(&self, x: f64, y: f64, t: f64) -> f64 {
        match (self.config.target.as_ref(), self.target_center(t)) {
            (Some(target), Some((cx, cy))) => {
                let r = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
                self.ambient * (1.0 + target.modulation(r))
            }
            _ => self.ambient,
        }
    }

    pub fn irradiance_at(&self, x: u16, y: u16, t: f64) -> Result<f64> {
        ensure!(
            x < self.config.width && y < self.config.height,
            "pixel ({x}, {y}) outside {}x{} scene",
            self.config.width,
            self.config.height
        );
        ensure!(t.is_finite() && t >= 0.0, "time must be finite and non-negative, got {t}");
        Ok(self.irradiance_unchecked(f64::from(x), f64::from(y), t))
    }

    pub(crate) fn irradiance_unchecked(&self, x: f64, y: f64, t: f64) -> f64 {
        (self.base_at(x, y, t) * self.flicker.factor(t)).max(IRRADIANCE_FLOOR)
    }
}

/// Irradiance at pixel `(x, y)` and time `t` seconds.
pub fn irradiance_at(scene: &SceneConfig, flicker: &FlickerConfig, x: u16, y: u16, t: f64) -> Result<f64> {
    Scene::new(*scene, *flicker)?.irradiance_at(x, y, t)
}
