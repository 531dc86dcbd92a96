//! DVS pixel model: log photoreceptor, a second low-pass stage whose cutoff
//! is set by `bias_fo`, and a contrast-threshold change detector with a
//! refractory period.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Result};
use crate::event::{Event, Polarity};
use crate::scalar::Real;
use crate::scene::{Scene, IRRADIANCE_FLOOR};

pub const BIAS_MIN: i32 = -35;
pub const BIAS_MAX: i32 = 55;

/// Cutoff of the bias-controlled stage: `10 * 2^((b + 35) / 15)` Hz, so the
/// bias range spans 10 Hz to 640 Hz.
pub fn bias_to_cutoff(bias_fo: i32) -> Result<f64> {
    ensure!(
        (BIAS_MIN..=BIAS_MAX).contains(&bias_fo),
        "bias_fo {bias_fo} outside [{BIAS_MIN}, {BIAS_MAX}]"
    );
    Ok(10.0 * 2f64.powf(f64::from(bias_fo - BIAS_MIN) / 15.0))
}

/// Exponential-smoothing coefficient of a first-order low-pass sampled
/// every `step` seconds (exact for piecewise-constant input).
pub fn lowpass_alpha(cutoff: f64, step: f64) -> f64 {
    1.0 - (-TAU * cutoff * step).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorConfig {
    /// Photoreceptor bandwidth, Hz.
    pub stage1_cutoff: f64,
    /// Log-intensity contrast thresholds.
    pub theta_on: f64,
    pub theta_off: f64,
    /// Seconds.
    pub refractory: f64,
    /// Seconds; must be a whole number of microseconds.
    pub sim_step: f64,
    pub bias_fo: i32,
    /// Dark current expressed as irradiance; the photoreceptor sees
    /// `ln(irradiance + dark_irradiance)`.
    pub dark_irradiance: f64,
    /// Relative standard deviation of per-pixel threshold mismatch.
    pub threshold_mismatch: f64,
    /// Relative standard deviation of comparator noise: every comparison
    /// sees its thresholds scaled by an independent bounded uniform draw.
    pub threshold_noise: f64,
    /// Per-pixel refractory periods are drawn uniformly from
    /// `[refractory, refractory * (1 + refractory_spread))`.
    pub refractory_spread: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            stage1_cutoff: 3000.0,
            theta_on: 0.15,
            theta_off: 0.15,
            refractory: 1e-3,
            sim_step: 1e-4,
            bias_fo: BIAS_MAX,
            dark_irradiance: 1e-3,
            threshold_mismatch: 0.1,
            threshold_noise: 0.1,
            refractory_spread: 0.2,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        bias_to_cutoff(self.bias_fo)?;
        ensure!(self.theta_on > 0.0 && self.theta_off > 0.0, "contrast thresholds must be positive");
        ensure!(self.stage1_cutoff > 0.0, "stage-1 cutoff must be positive");
        ensure!(self.refractory >= 0.0, "refractory period must be non-negative");
        ensure!(self.sim_step > 0.0, "sim_step must be positive");
        let us = self.sim_step * 1e6;
        ensure!((us - us.round()).abs() < 1e-6, "sim_step must be a whole number of microseconds");
        ensure!(self.dark_irradiance >= 0.0, "dark irradiance must be non-negative");
        ensure!(
            (0.0..0.5).contains(&self.threshold_mismatch),
            "threshold mismatch must lie in [0, 0.5)"
        );
        ensure!((0.0..0.5).contains(&self.threshold_noise), "threshold noise must lie in [0, 0.5)");
        ensure!(self.refractory_spread >= 0.0, "refractory spread must be non-negative");
        Ok(())
    }

    /// Highest flicker frequency resolved with at least four samples per
    /// period.
    pub fn max_resolvable_frequency(&self) -> f64 {
        1.0 / (4.0 * self.sim_step)
    }

    pub fn step_us(&self) -> u64 {
        (self.sim_step * 1e6).round() as u64
    }

    pub fn log_input(&self, irradiance: f64) -> f64 {
        (irradiance.max(IRRADIANCE_FLOOR) + self.dark_irradiance).ln()
    }
}

/// Filter memory of one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelState<T> {
    pub lp1: T,
    pub lp2: T,
    /// Level at the last event (the reset-and-reference capacitor).
    pub ref_level: T,
    /// Seconds.
    pub refractory_until: f64,
}

impl<T: Real> PixelState<T> {
    /// Fully settled on a constant log input.
    pub fn settled(log_irradiance: T) -> Self {
        Self { lp1: log_irradiance, lp2: log_irradiance, ref_level: log_irradiance, refractory_until: 0.0 }
    }
}

/// Precomputed per-step coefficients.
#[derive(Debug, Clone, Copy)]
struct Kernel<T> {
    alpha1: T,
    alpha2: T,
    refractory: f64,
}

impl<T: Real> Kernel<T> {
    fn new(cfg: &SensorConfig) -> Result<Self> {
        let cutoff = bias_to_cutoff(cfg.bias_fo)?;
        Ok(Self {
            alpha1: T::from_f64_lossy(lowpass_alpha(cfg.stage1_cutoff, cfg.sim_step)),
            alpha2: T::from_f64_lossy(lowpass_alpha(cutoff, cfg.sim_step)),
            refractory: cfg.refractory,
        })
    }

    #[inline(always)]
    fn step(&self, s: &mut PixelState<T>, input: T, t: f64, theta_on: T, theta_off: T) -> Option<Polarity> {
        s.lp1 += self.alpha1 * (input - s.lp1);
        s.lp2 += self.alpha2 * (s.lp1 - s.lp2);
        if t < s.refractory_until {
            return None;
        }
        let diff = s.lp2 - s.ref_level;
        let polarity = if diff >= theta_on {
            Polarity::On
        } else if diff <= -theta_off {
            Polarity::Off
        } else {
            return None;
        };
        s.ref_level = s.lp2;
        s.refractory_until = t + self.refractory;
        Some(polarity)
    }
}

/// Advances one pixel by one `cfg.sim_step` to time `t` with nominal
/// thresholds. Emits at most one event.
pub fn step_pixel<T: Real>(
    state: &PixelState<T>,
    cfg: &SensorConfig,
    log_irradiance: T,
    t: f64,
) -> Result<(PixelState<T>, Option<Polarity>)> {
    ensure!(log_irradiance.is_finite(), "non-finite log irradiance");
    ensure!(t.is_finite(), "non-finite time");
    ensure!(
        state.lp1.is_finite() && state.lp2.is_finite() && state.ref_level.is_finite(),
        "non-finite pixel state"
    );
    let kernel = Kernel::new(cfg)?;
    let mut next = *state;
    let polarity = kernel.step(
        &mut next,
        log_irradiance,
        t,
        T::from_f64_lossy(cfg.theta_on),
        T::from_f64_lossy(cfg.theta_off),
    );
    Ok((next, polarity))
}

/// A full pixel array driven by a [`Scene`]. Pixel state persists across
/// calls to [`Sensor::advance`], so the bias can change between seconds.
///
/// State is stored column-wise per field; refractory deadlines are kept as
/// step indices (`ceil(refractory / sim_step)` steps after an event).
#[derive(Debug, Clone)]
pub struct Sensor<T> {
    cfg: SensorConfig,
    width: u16,
    height: u16,
    lp1: Vec<T>,
    lp2: Vec<T>,
    ref_level: Vec<T>,
    ready_step: Vec<u64>,
    theta_on: Vec<T>,
    theta_off: Vec<T>,
    /// Lowest thresholds comparator noise can produce; below them a
    /// comparison cannot fire and no noise is drawn.
    floor_on: Vec<T>,
    floor_off: Vec<T>,
    noise_seed: u64,
    kernel: Kernel<T>,
    /// Per-pixel refractory period in steps.
    refractory_steps: Vec<u64>,
    step_us: u64,
    step: u64,
    row: Vec<T>,
    texture: TextureCache,
}

/// Base (unflickered) irradiance of the target's pixels, resampled once per
/// [`TEXTURE_REFRESH_US`]. Flicker is still applied every step.
#[derive(Debug, Clone, Default)]
struct TextureCache {
    block: Option<u64>,
    /// Per row: `(first column, offset into base)`; rows without target
    /// pixels have an empty span.
    spans: Vec<(usize, usize, usize)>,
    base: Vec<f64>,
}

/// Sample-and-hold period for the moving target texture.
pub const TEXTURE_REFRESH_US: u64 = 1000;

impl<T: Real> Sensor<T> {
    /// Builds a settled sensor looking at `scene` at time zero. Threshold
    /// mismatch is drawn from the scene seed.
    pub fn new(scene: &Scene, cfg: SensorConfig) -> Result<Self> {
        cfg.validate()?;
        if scene.flicker().enabled {
            ensure!(
                scene.flicker().frequency <= cfg.max_resolvable_frequency(),
                "sim_step {} s cannot resolve {} Hz flicker",
                cfg.sim_step,
                scene.flicker().frequency
            );
        }
        let (width, height) = (scene.width(), scene.height());
        let n = usize::from(width) * usize::from(height);
        let mut level = Vec::with_capacity(n);
        for y in 0..height {
            for x in 0..width {
                let irr = scene.irradiance_unchecked(f64::from(x), f64::from(y), 0.0);
                level.push(T::from_f64_lossy(cfg.log_input(irr)));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(scene.config().seed ^ 0x7468_7265_7368_6f6c);
        let spread = 3f64.sqrt();
        let mut draw = |theta: f64| -> T {
            let u: f64 = rng.gen_range(-spread..spread);
            T::from_f64_lossy(theta * (1.0 + cfg.threshold_mismatch * u))
        };
        let mut theta_on = Vec::with_capacity(n);
        let mut theta_off = Vec::with_capacity(n);
        for _ in 0..n {
            theta_on.push(draw(cfg.theta_on));
            theta_off.push(draw(cfg.theta_off));
        }
        let noise_floor = 1.0 - cfg.threshold_noise * spread;
        let refractory_steps = (0..n)
            .map(|_| {
                let period = cfg.refractory * (1.0 + cfg.refractory_spread * rng.gen::<f64>());
                (period / cfg.sim_step - 1e-9).ceil().max(0.0) as u64
            })
            .collect();
        Ok(Self {
            kernel: Kernel::new(&cfg)?,
            refractory_steps,
            step_us: cfg.step_us(),
            cfg,
            width,
            height,
            lp1: level.clone(),
            lp2: level.clone(),
            ref_level: level,
            ready_step: vec![0; n],
            floor_on: theta_on.iter().map(|&t| t * T::from_f64_lossy(noise_floor)).collect(),
            floor_off: theta_off.iter().map(|&t| t * T::from_f64_lossy(noise_floor)).collect(),
            theta_on,
            theta_off,
            noise_seed: scene.config().seed ^ 0x6a69_7474_6572,
            step: 0,
            row: vec![T::zero(); usize::from(width)],
            texture: TextureCache::default(),
        })
    }

    pub fn config(&self) -> &SensorConfig {
        &self.cfg
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn bias(&self) -> i32 {
        self.cfg.bias_fo
    }

    /// Rewrites `bias_fo` without touching the pixel state.
    pub fn set_bias(&mut self, bias_fo: i32) -> Result<()> {
        let mut cfg = self.cfg.clone();
        cfg.bias_fo = bias_fo;
        self.kernel = Kernel::new(&cfg)?;
        self.cfg = cfg;
        Ok(())
    }

    pub fn now_us(&self) -> u64 {
        self.step * self.step_us
    }

    pub fn now(&self) -> f64 {
        self.now_us() as f64 * 1e-6
    }

    pub fn state(&self, x: u16, y: u16) -> PixelState<T> {
        let i = usize::from(y) * usize::from(self.width) + usize::from(x);
        PixelState {
            lp1: self.lp1[i],
            lp2: self.lp2[i],
            ref_level: self.ref_level[i],
            refractory_until: (self.ready_step[i] * self.step_us) as f64 * 1e-6,
        }
    }

    fn refresh_texture(&mut self, scene: &Scene) {
        let refresh_steps = (TEXTURE_REFRESH_US / self.step_us).max(1);
        let block = (self.step - 1) / refresh_steps;
        if self.texture.block == Some(block) {
            return;
        }
        let tex = &mut self.texture;
        tex.block = Some(block);
        tex.spans.clear();
        tex.base.clear();
        let t = (block * refresh_steps + 1) as f64 * self.step_us as f64 * 1e-6;
        let width = usize::from(self.width);
        let disc = scene.config().target.zip(scene.target_center(t));
        for y in 0..self.height {
            let mut span = (0, 0, tex.base.len());
            if let Some((tc, (cx, cy))) = disc {
                let dy = f64::from(y) - cy;
                if dy.abs() <= tc.radius {
                    let half = (tc.radius * tc.radius - dy * dy).sqrt() + 1.0;
                    let lo = (cx - half).ceil().clamp(0.0, width as f64) as usize;
                    let hi = ((cx + half).floor() + 1.0).clamp(0.0, width as f64) as usize;
                    for x in lo..hi {
                        let r = ((x as f64 - cx).powi(2) + dy * dy).sqrt();
                        tex.base.push(scene.ambient() * (1.0 + tc.modulation(r)));
                    }
                    span = (lo, hi, span.2);
                }
            }
            tex.spans.push(span);
        }
    }

    /// Simulates `(now, until_us]` and appends the events, time-sorted with
    /// ties in row-major pixel order.
    pub fn advance_into(&mut self, scene: &Scene, until_us: u64, out: &mut Vec<Event>) -> Result<()> {
        ensure!(
            scene.width() == self.width && scene.height() == self.height,
            "scene size does not match sensor"
        );
        ensure!(until_us >= self.now_us(), "cannot simulate backwards");
        ensure!(until_us % self.step_us == 0, "end time must fall on a simulation step");
        let width = usize::from(self.width);
        let (a1, a2) = (self.kernel.alpha1, self.kernel.alpha2);
        let floor = T::from_f64_lossy(IRRADIANCE_FLOOR);
        let dark = T::from_f64_lossy(self.cfg.dark_irradiance);
        let noise = self.cfg.threshold_noise;
        while self.now_us() < until_us {
            self.step += 1;
            self.refresh_texture(scene);
            let step = self.step;
            let t_us = self.now_us();
            let factor = scene.flicker().factor(t_us as f64 * 1e-6);
            let background = T::from_f64_lossy(self.cfg.log_input(scene.ambient() * factor));
            let factor_t = T::from_f64_lossy(factor);
            for y in 0..self.height {
                let start = usize::from(y) * width;
                let lp1 = &mut self.lp1[start..start + width];
                let lp2 = &mut self.lp2[start..start + width];
                let (lo, hi, offset) = self.texture.spans[usize::from(y)];
                if lo == hi {
                    for (l1, l2) in lp1.iter_mut().zip(lp2.iter_mut()) {
                        *l1 += a1 * (background - *l1);
                        *l2 += a2 * (*l1 - *l2);
                    }
                } else {
                    let row = &mut self.row;
                    row.fill(background);
                    let base = &self.texture.base[offset..offset + (hi - lo)];
                    for (v, &b) in row[lo..hi].iter_mut().zip(base) {
                        *v = ((T::from_f64_lossy(b) * factor_t).max(floor) + dark).ln();
                    }
                    for ((l1, l2), &input) in lp1.iter_mut().zip(lp2.iter_mut()).zip(row.iter()) {
                        *l1 += a1 * (input - *l1);
                        *l2 += a2 * (*l1 - *l2);
                    }
                }
                let ref_level = &mut self.ref_level[start..start + width];
                let ready = &mut self.ready_step[start..start + width];
                let on = &self.theta_on[start..start + width];
                let off = &self.theta_off[start..start + width];
                let floor_on = &self.floor_on[start..start + width];
                let floor_off = &self.floor_off[start..start + width];
                for (x, (((l2, r), rd), (fl_on, fl_off))) in lp2
                    .iter()
                    .zip(ref_level.iter_mut())
                    .zip(ready.iter_mut())
                    .zip(floor_on.iter().zip(floor_off))
                    .enumerate()
                {
                    let diff = *l2 - *r;
                    if diff < *fl_on && diff > -*fl_off {
                        continue;
                    }
                    if step < *rd {
                        continue;
                    }
                    let (th_on, th_off) = if noise > 0.0 {
                        let (u_on, u_off) = comparator_noise(self.noise_seed, (start + x) as u64, step);
                        (on[x] * T::from_f64_lossy(1.0 + noise * u_on), off[x] * T::from_f64_lossy(1.0 + noise * u_off))
                    } else {
                        (on[x], off[x])
                    };
                    let polarity = if diff >= th_on {
                        Polarity::On
                    } else if diff <= -th_off {
                        Polarity::Off
                    } else {
                        continue;
                    };
                    *r = *l2;
                    *rd = step + self.refractory_steps[start + x];
                    out.push(Event::new(x as u16, y, t_us, polarity));
                }
            }
        }
        Ok(())
    }

    pub fn advance(&mut self, scene: &Scene, until_us: u64) -> Result<Vec<Event>> {
        let mut out = Vec::new();
        self.advance_into(scene, until_us, &mut out)?;
        Ok(out)
    }
}

/// Two zero-mean, unit-variance uniforms keyed by pixel and step, so the
/// draw does not depend on the order pixels are visited in.
fn comparator_noise(seed: u64, pixel: u64, count: u64) -> (f64, f64) {
    let mut z = seed ^ pixel.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ count.wrapping_mul(0xd1b5_4a32_d192_ed03);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    let spread = 3f64.sqrt();
    let unit = |bits: u64| (bits as f64 / u32::MAX as f64) * 2.0 - 1.0;
    (spread * unit(z >> 32), spread * unit(z & 0xffff_ffff))
}

/// Events emitted in `(t0, t1]` by a sensor that starts settled at time zero.
pub fn simulate<T: Real>(scene: &Scene, cfg: &SensorConfig, t0: f64, t1: f64) -> Result<Vec<Event>> {
    ensure!(t1 > t0 && t0 >= 0.0, "simulate needs 0 <= t0 < t1, got [{t0}, {t1}]");
    let mut sensor = Sensor::<T>::new(scene, cfg.clone())?;
    let to_us = |t: f64| -> u64 {
        let step = sensor.step_us;
        ((t * 1e6 / step as f64).round() as u64) * step
    };
    let (start, end) = (to_us(t0), to_us(t1));
    sensor.advance(scene, start)?;
    sensor.advance(scene, end)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::scene::{FlickerConfig, SceneConfig, TargetConfig, Trajectory};

    #[test]
    fn cutoff_mapping_endpoints() {
        assert_eq!(bias_to_cutoff(-35).unwrap(), 10.0);
        assert_eq!(bias_to_cutoff(55).unwrap(), 640.0);
        assert!((bias_to_cutoff(10).unwrap() - 80.0).abs() < 1e-12);
        assert!(matches!(bias_to_cutoff(-36), Err(Error::Contract(_))));
        assert!(matches!(bias_to_cutoff(56), Err(Error::Contract(_))));
    }

    #[test]
    fn cutoff_strictly_increasing() {
        let fc: Vec<f64> = (BIAS_MIN..=BIAS_MAX).map(|b| bias_to_cutoff(b).unwrap()).collect();
        assert!(fc.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn constant_input_settles_to_silence() {
        let cfg = SensorConfig::default();
        let mut state = PixelState::<f64>::settled(0.0);
        let level = 1.3;
        // Settle for well over 10 stage-1 time constants and the much slower
        // stage 2, then demand silence.
        let settle = (10.0 / cfg.stage1_cutoff / cfg.sim_step).ceil() as u64 + 2000;
        for k in 1..=settle {
            state = step_pixel(&state, &cfg, level, k as f64 * cfg.sim_step).unwrap().0;
        }
        for k in settle + 1..settle + 10_000 {
            let (next, ev) = step_pixel(&state, &cfg, level, k as f64 * cfg.sim_step).unwrap();
            assert!(ev.is_none());
            state = next;
        }
    }

    /// Closed-form response of the two-stage cascade to a unit step: the
    /// product of the stage transfer functions evaluated sample by sample.
    fn cascade_step_response(a1: f64, a2: f64, n: u32) -> f64 {
        // Stage 1: 1 - (1-a1)^k. Stage 2 convolves that with a2 (1-a2)^j.
        let (r1, r2) = (1.0 - a1, 1.0 - a2);
        let n = i32::try_from(n).unwrap();
        if (r1 - r2).abs() < 1e-12 {
            return 1.0 - r2.powi(n) - f64::from(n) * a2 * r1.powi(n);
        }
        1.0 - r2.powi(n) - a2 * r1 * (r1.powi(n) - r2.powi(n)) / (r1 - r2)
    }

    #[test]
    fn step_increase_fires_on_event_within_five_time_constants() {
        for bias in [BIAS_MIN, 10, BIAS_MAX] {
            let cfg = SensorConfig { bias_fo: bias, ..SensorConfig::default() };
            let tau = 1.0 / (TAU * bias_to_cutoff(bias).unwrap());
            let deadline = (5.0 * tau / cfg.sim_step).ceil() as u32;
            let a1 = lowpass_alpha(cfg.stage1_cutoff, cfg.sim_step);
            let a2 = lowpass_alpha(bias_to_cutoff(bias).unwrap(), cfg.sim_step);
            let jump = 3.0 * cfg.theta_on;
            // Analytic crossing of theta_on by the cascade output.
            let first_cross = (1..=deadline).find(|&n| jump * cascade_step_response(a1, a2, n) >= cfg.theta_on);
            assert!(first_cross.is_some(), "analytic response too slow at bias {bias}");

            let mut state = PixelState::<f64>::settled(0.0);
            let mut fired = None;
            for k in 1..=deadline {
                let (next, ev) = step_pixel(&state, &cfg, jump, f64::from(k) * cfg.sim_step).unwrap();
                state = next;
                if ev == Some(Polarity::On) {
                    fired = Some(k);
                    break;
                }
            }
            assert_eq!(fired, first_cross, "bias {bias}");
        }
    }

    fn sine_event_count(cfg: &SensorConfig, freq: f64, amplitude: f64) -> usize {
        let mut state = PixelState::<f64>::settled(0.0);
        let steps = (1.0 / cfg.sim_step).round() as u32;
        let mut count = 0;
        for k in 1..=steps {
            let t = f64::from(k) * cfg.sim_step;
            let (next, ev) = step_pixel(&state, cfg, amplitude * (TAU * freq * t).sin(), t).unwrap();
            state = next;
            count += usize::from(ev.is_some());
        }
        count
    }

    #[test]
    fn second_stage_attenuates_fast_sinusoids() {
        let cfg = SensorConfig { bias_fo: -5, ..SensorConfig::default() };
        let fc = bias_to_cutoff(cfg.bias_fo).unwrap();
        let amp = 2.0 * cfg.theta_on;
        let fast = sine_event_count(&cfg, 16.0 * fc, amp);
        let slow = sine_event_count(&cfg, fc / 4.0, amp);
        assert!(slow > 0);
        assert!(fast < slow, "fast {fast} slow {slow}");
    }

    #[test]
    fn non_finite_input_is_a_contract_violation() {
        let cfg = SensorConfig::default();
        let s = PixelState::<f64>::settled(0.0);
        assert!(matches!(step_pixel(&s, &cfg, f64::NAN, 0.0), Err(Error::Contract(_))));
        assert!(matches!(step_pixel(&s, &cfg, f64::INFINITY, 0.0), Err(Error::Contract(_))));
    }

    #[test]
    fn refractory_blocks_immediate_second_event() {
        let cfg = SensorConfig { refractory: 5e-3, bias_fo: BIAS_MAX, ..SensorConfig::default() };
        let mut s = PixelState::<f64>::settled(0.0);
        let mut times = Vec::new();
        for k in 1..2000u32 {
            let t = f64::from(k) * cfg.sim_step;
            // Ramp far faster than one threshold per refractory period.
            let (next, ev) = step_pixel(&s, &cfg, f64::from(k) * 0.05, t).unwrap();
            s = next;
            if ev.is_some() {
                times.push(t);
            }
        }
        assert!(times.len() > 10);
        assert!(times.windows(2).all(|w| w[1] - w[0] >= cfg.refractory - 1e-12));
    }

    fn static_scene() -> SceneConfig {
        SceneConfig {
            width: 32,
            height: 32,
            ambient_lux: 1000.0,
            target: Some(TargetConfig {
                trajectory: Trajectory::Static { center: (16.0, 16.0) },
                radius: 8.0,
                contrast: 0.5,
                rings: 3,
            }),
            seed: 3,
        }
    }

    #[test]
    fn settled_static_scene_is_silent() {
        let scene = Scene::new(static_scene(), FlickerConfig::off()).unwrap();
        let events = simulate::<f32>(&scene, &SensorConfig::default(), 0.0, 0.1).unwrap();
        assert!(events.is_empty());
    }

    #[test]
    fn sensor_output_is_time_sorted_and_deterministic() {
        let scene = Scene::new(SceneConfig { width: 48, height: 40, ..SceneConfig::default() }, FlickerConfig::half_sine(100.0, 0.3))
            .unwrap();
        let a = simulate::<f32>(&scene, &SensorConfig::default(), 0.0, 0.2).unwrap();
        let b = simulate::<f32>(&scene, &SensorConfig::default(), 0.0, 0.2).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0].t_us <= w[1].t_us));
    }

    #[test]
    fn split_runs_match_one_long_run() {
        let scene = Scene::new(SceneConfig { width: 40, height: 40, ..SceneConfig::default() }, FlickerConfig::half_sine(50.0, 0.3))
            .unwrap();
        let mut one = Sensor::<f32>::new(&scene, SensorConfig::default()).unwrap();
        let whole = one.advance(&scene, 200_000).unwrap();
        let mut two = Sensor::<f32>::new(&scene, SensorConfig::default()).unwrap();
        let mut parts = two.advance(&scene, 70_000).unwrap();
        parts.extend(two.advance(&scene, 200_000).unwrap());
        assert_eq!(whole, parts);
    }

    #[test]
    fn sensor_rejects_unresolvable_flicker() {
        let scene = Scene::new(static_scene(), FlickerConfig::half_sine(300.0, 0.3)).unwrap();
        let coarse = SensorConfig { sim_step: 1e-3, ..SensorConfig::default() };
        assert!(Sensor::<f32>::new(&scene, coarse).is_err());
        assert!(Sensor::<f32>::new(&scene, SensorConfig::default()).is_ok());
    }

    #[test]
    fn set_bias_validates_range() {
        let scene = Scene::new(static_scene(), FlickerConfig::off()).unwrap();
        let mut sensor = Sensor::<f32>::new(&scene, SensorConfig::default()).unwrap();
        assert!(sensor.set_bias(-40).is_err());
        assert_eq!(sensor.bias(), BIAS_MAX);
        sensor.set_bias(-35).unwrap();
        assert_eq!(sensor.bias(), -35);
    }
}
