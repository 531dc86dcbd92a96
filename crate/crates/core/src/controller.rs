//! Per-second bias update state machine.
//!
//! Each second the controller looks at how many frames were classified as
//! flickering. A flickering second lowers `bias_fo` by one step (narrowing
//! the pixel bandwidth); a run of clean seconds raises it again by one step.
//! Requiring many clean seconds before a raise keeps the loop from
//! oscillating between "flicker found" and "flicker gone".

use crate::error::{ensure, Result};
use crate::metrics::SecondSummary;
use crate::pixel::{BIAS_MAX, BIAS_MIN};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControllerConfig {
    pub step: i32,
    pub min_bias: i32,
    pub max_bias: i32,
    /// Consecutive clean seconds required before a raise.
    pub clean_seconds_to_raise: u32,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self { step: 5, min_bias: BIAS_MIN, max_bias: BIAS_MAX, clean_seconds_to_raise: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BiasState {
    pub bias_fo: i32,
    pub clean_seconds: u32,
    /// Flicker persisted with the bias already at its minimum.
    pub exhausted: bool,
}

impl BiasState {
    pub fn new(bias_fo: i32) -> Self {
        Self { bias_fo, clean_seconds: 0, exhausted: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Lower,
    Raise,
    Hold,
    Exhausted,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Lower => "lower",
            Action::Raise => "raise",
            Action::Hold => "hold",
            Action::Exhausted => "exhausted",
        }
    }
}

/// Majority vote over the second's frames.
pub fn flicker_declared(summary: &SecondSummary) -> bool {
    2 * summary.flicker_frames > summary.total_frames
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BiasController {
    config: ControllerConfig,
}

impl BiasController {
    pub fn new(config: ControllerConfig) -> Result<Self> {
        ensure!(config.step > 0, "bias step must be positive");
        ensure!(config.min_bias <= config.max_bias, "empty bias range");
        ensure!(config.clean_seconds_to_raise > 0, "raise interval must be positive");
        Ok(Self { config })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn initial_state(&self, bias_fo: i32) -> Result<BiasState> {
        ensure!(
            (self.config.min_bias..=self.config.max_bias).contains(&bias_fo),
            "initial bias {bias_fo} outside [{}, {}]",
            self.config.min_bias,
            self.config.max_bias
        );
        Ok(BiasState::new(bias_fo))
    }

    pub fn decide(&self, state: &BiasState, summary: &SecondSummary) -> Result<(BiasState, Action)> {
        summary.validate()?;
        self.step(state, flicker_declared(summary))
    }

    /// Transition on an already-decided verdict for one second.
    pub fn step(&self, state: &BiasState, flicker: bool) -> Result<(BiasState, Action)> {
        let cfg = &self.config;
        ensure!(
            (cfg.min_bias..=cfg.max_bias).contains(&state.bias_fo),
            "bias {} outside [{}, {}]",
            state.bias_fo,
            cfg.min_bias,
            cfg.max_bias
        );
        if flicker {
            if state.bias_fo == cfg.min_bias {
                let next = BiasState { bias_fo: cfg.min_bias, clean_seconds: 0, exhausted: true };
                return Ok((next, Action::Exhausted));
            }
            let next = BiasState { bias_fo: (state.bias_fo - cfg.step).max(cfg.min_bias), clean_seconds: 0, exhausted: false };
            return Ok((next, Action::Lower));
        }
        let clean_seconds = state.clean_seconds + 1;
        if clean_seconds >= cfg.clean_seconds_to_raise {
            let next = BiasState { bias_fo: (state.bias_fo + cfg.step).min(cfg.max_bias), clean_seconds: 0, exhausted: false };
            Ok((next, Action::Raise))
        } else {
            Ok((BiasState { bias_fo: state.bias_fo, clean_seconds, exhausted: false }, Action::Hold))
        }
    }
}

/// [`BiasController::decide`] with the default configuration.
pub fn decide(state: &BiasState, summary: &SecondSummary) -> Result<(BiasState, Action)> {
    BiasController::default().decide(state, summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(flicker_frames: usize) -> SecondSummary {
        SecondSummary {
            mean_ag: 0.1,
            flicker_frames,
            total_frames: 10,
            mean_any_conf: 0.5,
            mean_target_conf: 0.4,
            detection_success: 0.3,
            bias_fo: 0,
        }
    }

    fn state(bias_fo: i32, clean_seconds: u32, exhausted: bool) -> BiasState {
        BiasState { bias_fo, clean_seconds, exhausted }
    }

    #[test]
    fn flicker_lowers_by_one_step() {
        assert_eq!(decide(&state(55, 0, false), &summary(10)).unwrap(), (state(50, 0, false), Action::Lower));
    }

    #[test]
    fn flicker_at_minimum_exhausts() {
        assert_eq!(decide(&state(-35, 0, false), &summary(7)).unwrap(), (state(-35, 0, true), Action::Exhausted));
    }

    #[test]
    fn tenth_clean_second_raises() {
        assert_eq!(decide(&state(20, 9, false), &summary(0)).unwrap(), (state(25, 0, false), Action::Raise));
        assert_eq!(decide(&state(20, 3, false), &summary(5)).unwrap(), (state(20, 4, false), Action::Hold));
    }

    #[test]
    fn raise_at_maximum_stays_clamped() {
        assert_eq!(decide(&state(55, 9, false), &summary(0)).unwrap(), (state(55, 0, false), Action::Raise));
    }

    #[test]
    fn majority_is_strict() {
        assert!(!flicker_declared(&summary(5)));
        assert!(flicker_declared(&summary(6)));
    }

    #[test]
    fn malformed_summaries_rejected() {
        let mut s = summary(11);
        assert!(decide(&state(0, 0, false), &s).is_err());
        s = summary(0);
        s.total_frames = 0;
        assert!(decide(&state(0, 0, false), &s).is_err());
        s = summary(0);
        s.detection_success = 1.5;
        assert!(decide(&state(0, 0, false), &s).is_err());
        assert!(decide(&state(60, 0, false), &summary(0)).is_err());
    }
}
