//! The closed loop: simulate one second at the current bias, turn it into
//! frames, score every frame, summarise, let the controller pick the next
//! bias and write it back to the sensor.

use crate::classifier::{FrameClassifier, Verdict};
use crate::controller::{Action, BiasController, BiasState, ControllerConfig};
use crate::detector::Detector;
use crate::error::{ensure, Result};
use crate::event::Event;
use crate::formats::EventWriter;
use crate::frame::{FrameAccumulator, DEFAULT_DECAY, DEFAULT_WINDOW};
use crate::metrics::{average_gradient, summarize_second, FrameRecord, SecondSummary};
use crate::pixel::{Sensor, SensorConfig, BIAS_MAX};
use crate::scalar::Real;
use crate::scene::Scene;

#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    pub duration_s: u32,
    pub initial_bias: i32,
    pub window: f64,
    pub decay: f64,
    pub controller: ControllerConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            duration_s: 60,
            initial_bias: BIAS_MAX,
            window: DEFAULT_WINDOW,
            decay: DEFAULT_DECAY,
            controller: ControllerConfig::default(),
        }
    }
}

impl LoopConfig {
    /// Frames per simulated second; the window must divide one second.
    pub fn frames_per_second(&self) -> Result<usize> {
        ensure!(self.window > 0.0 && self.window <= 1.0, "window {} s outside (0, 1]", self.window);
        let n = (1.0 / self.window).round();
        ensure!((n * self.window - 1.0).abs() < 1e-9, "window {} s does not divide one second", self.window);
        Ok(n as usize)
    }
}

/// Everything the loop knows about one simulated second.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondRecord {
    /// 1-based; second `s` covers `(s - 1, s]`.
    pub second: u32,
    pub summary: SecondSummary,
    /// Controller state after deciding on this second.
    pub state: BiasState,
    pub action: Action,
    pub event_count: usize,
    pub frames: Vec<FrameRecord>,
}

impl SecondRecord {
    pub fn flicker_verdicts(&self) -> usize {
        self.frames.iter().filter(|f| f.verdict == Verdict::Flicker).count()
    }
}

/// Destination for the raw event stream.
pub trait EventSink {
    fn accept(&mut self, events: &[Event]) -> Result<()>;
}

impl<W: std::io::Write> EventSink for EventWriter<W> {
    fn accept(&mut self, events: &[Event]) -> Result<()> {
        self.write(events)
    }
}

impl EventSink for Vec<Event> {
    fn accept(&mut self, events: &[Event]) -> Result<()> {
        self.extend_from_slice(events);
        Ok(())
    }
}

pub struct ClosedLoop<'a, T, C: ?Sized> {
    scene: &'a Scene,
    sensor: Sensor<T>,
    frames: FrameAccumulator<f32>,
    classifier: &'a mut C,
    detector: &'a Detector,
    controller: BiasController,
    state: BiasState,
    frames_per_second: usize,
    second: u32,
    buf: Vec<Event>,
}

impl<'a, T: Real, C: FrameClassifier + ?Sized> ClosedLoop<'a, T, C> {
    pub fn new(
        scene: &'a Scene,
        sensor_cfg: SensorConfig,
        classifier: &'a mut C,
        detector: &'a Detector,
        cfg: &LoopConfig,
    ) -> Result<Self> {
        let controller = BiasController::new(cfg.controller.clone())?;
        let state = controller.initial_state(cfg.initial_bias)?;
        let mut sensor = Sensor::new(scene, sensor_cfg)?;
        sensor.set_bias(state.bias_fo)?;
        Ok(Self {
            scene,
            frames: FrameAccumulator::new(scene.width(), scene.height(), cfg.decay, cfg.window)?,
            sensor,
            classifier,
            detector,
            controller,
            state,
            frames_per_second: cfg.frames_per_second()?,
            second: 0,
            buf: Vec::new(),
        })
    }

    pub fn state(&self) -> &BiasState {
        &self.state
    }

    pub fn sensor(&self) -> &Sensor<T> {
        &self.sensor
    }

    /// Runs one second and applies the resulting bias.
    pub fn step_second(&mut self, mut sink: Option<&mut dyn EventSink>) -> Result<SecondRecord> {
        let bias = self.state.bias_fo;
        let mut records = Vec::with_capacity(self.frames_per_second);
        let mut event_count = 0;
        for _ in 0..self.frames_per_second {
            self.buf.clear();
            let end = self.frames.next_end_us();
            self.sensor.advance_into(self.scene, end, &mut self.buf)?;
            event_count += self.buf.len();
            if let Some(sink) = sink.as_deref_mut() {
                sink.accept(&self.buf)?;
            }
            let frame = self.frames.push(&self.buf)?;
            let verdict = self.classifier.classify(frame)?;
            let ag = average_gradient(&frame.cast::<f64>())?;
            let detection = self.detector.detect(frame);
            records.push(FrameRecord { ag, verdict, detection });
        }
        let summary = summarize_second(&records, bias)?;
        let (state, action) = self.controller.decide(&self.state, &summary)?;
        self.sensor.set_bias(state.bias_fo)?;
        self.state = state.clone();
        self.second += 1;
        Ok(SecondRecord { second: self.second, summary, state, action, event_count, frames: records })
    }
}

/// Runs the loop for `cfg.duration_s` seconds and returns the trajectory.
pub fn run_loop<T: Real, C: FrameClassifier + ?Sized>(
    scene: &Scene,
    sensor_cfg: SensorConfig,
    classifier: &mut C,
    detector: &Detector,
    cfg: &LoopConfig,
    mut sink: Option<&mut dyn EventSink>,
) -> Result<Vec<SecondRecord>> {
    let mut cl = ClosedLoop::<T, C>::new(scene, sensor_cfg, classifier, detector, cfg)?;
    let mut out = Vec::with_capacity(cfg.duration_s as usize);
    for _ in 0..cfg.duration_s {
        out.push(cl.step_second(sink.as_mut().map(|s| &mut **s as &mut dyn EventSink))?);
    }
    Ok(out)
}
