//! Event accumulation frames with decayed history, and the resampling that
//! turns them into classifier input.

use crate::error::{ensure, Result};
use crate::event::Event;
use crate::scalar::Real;

/// Ten frames per second.
pub const DEFAULT_WINDOW: f64 = 0.1;
pub const DEFAULT_DECAY: f64 = 0.1;
/// Side of the square classifier input.
pub const INPUT_SIDE: usize = 224;
/// Accumulated values in `[-c, c]` map affinely onto `[0, 1]`.
pub const NORMALIZATION_RANGE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EventFrame<T> {
    width: u16,
    height: u16,
    data: Vec<T>,
    /// Seconds; always `frame_index * window`.
    pub t_end: f64,
    pub frame_index: u64,
}

impl<T: Real> EventFrame<T> {
    pub fn zeros(width: u16, height: u16) -> Self {
        Self::from_data(width, height, vec![T::zero(); usize::from(width) * usize::from(height)])
    }

    /// Wraps row-major `data`; timing fields start at zero.
    pub fn from_data(width: u16, height: u16, data: Vec<T>) -> Self {
        assert_eq!(data.len(), usize::from(width) * usize::from(height), "frame data does not match dimensions");
        Self { width, height, data, t_end: 0.0, frame_index: 0 }
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * usize::from(self.width) + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * usize::from(self.width) + x] = v;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { data: self.data.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    /// Same frame in another scalar type.
    pub fn cast<U: Real>(&self) -> EventFrame<U> {
        EventFrame {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
            t_end: self.t_end,
            frame_index: self.frame_index,
        }
    }
}

fn window_us(window: f64) -> Result<u64> {
    ensure!(window.is_finite() && window > 0.0, "window must be positive, got {window}");
    let us = (window * 1e6).round();
    ensure!((window * 1e6 - us).abs() < 1e-6, "window must be a whole number of microseconds");
    Ok(us as u64)
}

/// Builds the frame that follows `prev` (or the first frame, covering
/// `(0, window]`): `decay * prev + signed event count per pixel`.
pub fn accumulate<T: Real>(
    events: &[Event],
    prev: Option<&EventFrame<T>>,
    decay: f64,
    window: f64,
    size: (u16, u16),
) -> Result<EventFrame<T>> {
    ensure!((0.0..1.0).contains(&decay), "decay {decay} outside [0, 1)");
    let win_us = window_us(window)?;
    let (width, height) = size;
    let frame_index = match prev {
        Some(p) => {
            ensure!(p.width == width && p.height == height, "previous frame has different dimensions");
            ensure!(
                p.t_end == p.frame_index as f64 * window,
                "previous frame was built with a different window"
            );
            p.frame_index + 1
        }
        None => 1,
    };
    let start_us = (frame_index - 1) * win_us;
    let end_us = frame_index * win_us;

    let mut data = match prev {
        Some(p) => {
            let d = T::from_f64_lossy(decay);
            p.data.iter().map(|&v| d * v).collect()
        }
        None => vec![T::zero(); usize::from(width) * usize::from(height)],
    };
    for ev in events {
        ensure!(
            ev.t_us > start_us && ev.t_us <= end_us,
            "event at {} us outside window ({start_us}, {end_us}]",
            ev.t_us
        );
        ensure!(ev.x < width && ev.y < height, "event at ({}, {}) outside frame", ev.x, ev.y);
        let cell = &mut data[usize::from(ev.y) * usize::from(width) + usize::from(ev.x)];
        *cell += T::from_i8(ev.polarity.sign()).expect("sign fits any float");
    }
    Ok(EventFrame { width, height, data, t_end: frame_index as f64 * window, frame_index })
}

/// Running accumulator that chains frames at a fixed cadence.
#[derive(Debug, Clone)]
pub struct FrameAccumulator<T> {
    size: (u16, u16),
    decay: f64,
    window: f64,
    prev: Option<EventFrame<T>>,
}

impl<T: Real> FrameAccumulator<T> {
    pub fn new(width: u16, height: u16, decay: f64, window: f64) -> Result<Self> {
        ensure!((0.0..1.0).contains(&decay), "decay {decay} outside [0, 1)");
        window_us(window)?;
        Ok(Self { size: (width, height), decay, window, prev: None })
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn window_us(&self) -> u64 {
        (self.window * 1e6).round() as u64
    }

    /// End of the next window in microseconds.
    pub fn next_end_us(&self) -> u64 {
        let next = self.prev.as_ref().map_or(1, |p| p.frame_index + 1);
        next * self.window_us()
    }

    pub fn push(&mut self, events: &[Event]) -> Result<&EventFrame<T>> {
        let frame = accumulate(events, self.prev.as_ref(), self.decay, self.window, self.size)?;
        Ok(self.prev.insert(frame))
    }
}

/// Nearest-neighbour upsampling to 224x224 followed by
/// `clip((v + c) / 2c, 0, 1)` with `c = 3`.
pub fn to_classifier_input<T: Real>(frame: &EventFrame<T>) -> Result<Vec<T>> {
    let (w, h) = (usize::from(frame.width), usize::from(frame.height));
    ensure!(w > 0 && h > 0, "empty frame");
    ensure!(w <= INPUT_SIDE && h <= INPUT_SIDE, "frame {w}x{h} larger than {INPUT_SIDE}x{INPUT_SIDE}");
    let c = T::from_f64_lossy(NORMALIZATION_RANGE);
    let two_c = c + c;
    let xs: Vec<usize> = (0..INPUT_SIDE).map(|i| i * w / INPUT_SIDE).collect();
    let mut out = Vec::with_capacity(INPUT_SIDE * INPUT_SIDE);
    for i in 0..INPUT_SIDE {
        let row = &frame.data[(i * h / INPUT_SIDE) * w..][..w];
        out.extend(xs.iter().map(|&sx| ((row[sx] + c) / two_c).max(T::zero()).min(T::one())));
    }
    Ok(out)
}
