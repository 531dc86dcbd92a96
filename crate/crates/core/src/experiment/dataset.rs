//! Labelled frame corpora for training and checking the classifier.
//!
//! Every clip is a short closed-scene simulation at a fixed bias. Labels
//! come from how the clip was configured, never from looking at the
//! frames. A flickering clip is only used when the bias leaves the flicker
//! inside the pixel bandwidth (`f_c(b) >= f`); lower biases attenuate it
//! into a grey zone that has no ground truth.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{derive_seed, parse_lux, ExperimentConfig};
use crate::classifier::train::TrainingSet;
use crate::classifier::Verdict;
use crate::error::{ensure, Error, Result};
use crate::event::Event;
use crate::formats::{read_frames, FrameWriter};
use crate::frame::{to_classifier_input, EventFrame, FrameAccumulator, DEFAULT_DECAY, DEFAULT_WINDOW};
use crate::pixel::{bias_to_cutoff, Sensor, SensorConfig, BIAS_MAX, BIAS_MIN};
use crate::scalar::Real;
use crate::scene::{FlickerConfig, LuxPreset, Scene, SceneConfig, IRRADIANCE_PER_LUX};

/// Frames kept per one-second clip; the first frame starts from a settled
/// sensor with no history and is dropped.
pub const FRAMES_PER_CLIP: usize = 9;

pub const LABEL_HEADER: [&str; 8] = ["index", "label", "frequency_hz", "lux", "bias_fo", "clip", "frame_index", "seed"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Split::Train => 0x7472_6169_6e,
            Split::Val => 0x76_616c,
            Split::Test => 0x74_6573_74,
        }
    }
}

/// Total frames per split, half of them per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self { train: 3560, val: 552, test: 552 }
    }
}

/// How one clip was simulated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipSpec {
    pub lux: LuxPreset,
    /// `(frequency, phase)`; `None` for a clean clip.
    pub flicker: Option<(f64, f64)>,
    pub bias_fo: i32,
    pub seed: u64,
}

impl ClipSpec {
    pub fn label(&self) -> Verdict {
        Verdict::from_flag(self.flicker.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMeta {
    pub label: Verdict,
    /// Zero for clean frames.
    pub frequency_hz: f64,
    pub lux: LuxPreset,
    pub bias_fo: i32,
    pub clip: u32,
    pub frame_index: u64,
    pub seed: u64,
}

/// Frames of one split, stored row-major as `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameCorpus {
    pub width: u16,
    pub height: u16,
    pub data: Vec<f32>,
    pub meta: Vec<FrameMeta>,
}

impl FrameCorpus {
    fn new(width: u16, height: u16) -> Self {
        Self { width, height, data: Vec::new(), meta: Vec::new() }
    }

    pub fn frame_len(&self) -> usize {
        usize::from(self.width) * usize::from(self.height)
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn frame(&self, index: usize) -> EventFrame<f32> {
        let n = self.frame_len();
        let mut f = EventFrame::from_data(self.width, self.height, self.data[index * n..][..n].to_vec());
        f.frame_index = self.meta[index].frame_index;
        f.t_end = f.frame_index as f64 * DEFAULT_WINDOW;
        f
    }

    fn push(&mut self, frame: &EventFrame<f32>, meta: FrameMeta) {
        self.data.extend_from_slice(frame.data());
        self.meta.push(meta);
    }

    /// Writes `<name>.frm` and `<name>.labels.csv` into `dir`.
    pub fn save(&self, dir: &Path, name: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let count = u32::try_from(self.len()).map_err(|_| crate::error::contract("corpus too large for FRM1"))?;
        let file = BufWriter::new(File::create(dir.join(format!("{name}.frm")))?);
        let mut frames = FrameWriter::new(file, self.width, self.height, count)?;
        for chunk in self.data.chunks(self.frame_len()) {
            frames.write(chunk)?;
        }
        frames.finish()?;

        let mut labels = csv::Writer::from_path(dir.join(format!("{name}.labels.csv")))?;
        labels.write_record(LABEL_HEADER)?;
        for (i, m) in self.meta.iter().enumerate() {
            labels.write_record([
                i.to_string(),
                m.label.index().to_string(),
                m.frequency_hz.to_string(),
                m.lux.name().to_string(),
                m.bias_fo.to_string(),
                m.clip.to_string(),
                m.frame_index.to_string(),
                m.seed.to_string(),
            ])?;
        }
        labels.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path, name: &str) -> Result<Self> {
        let set = read_frames(BufReader::new(File::open(dir.join(format!("{name}.frm")))?))?;
        let bad = |reason: String| Error::Format { format: "label", reason };
        let mut reader = csv::Reader::from_path(dir.join(format!("{name}.labels.csv")))?;
        ensure_header(reader.headers()?)?;
        let mut meta = Vec::with_capacity(set.len());
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let field = |i: usize| record.get(i).ok_or_else(|| bad(format!("row {row}: missing column {i}")));
            let num = |i: usize| -> Result<f64> {
                field(i)?.parse::<f64>().map_err(|_| bad(format!("row {row}: column {} not numeric", LABEL_HEADER[i])))
            };
            let label = match field(1)? {
                "0" => Verdict::NoFlicker,
                "1" => Verdict::Flicker,
                other => return Err(bad(format!("row {row}: label {other:?} is not 0 or 1"))),
            };
            meta.push(FrameMeta {
                label,
                frequency_hz: num(2)?,
                lux: parse_lux(field(3)?)?,
                bias_fo: num(4)? as i32,
                clip: num(5)? as u32,
                frame_index: num(6)? as u64,
                seed: field(7)?.parse().map_err(|_| bad(format!("row {row}: bad seed")))?,
            });
        }
        if meta.len() != set.len() {
            return Err(bad(format!("{} labels for {} frames", meta.len(), set.len())));
        }
        Ok(Self { width: set.width, height: set.height, data: set.data, meta })
    }
}

fn ensure_header(header: &csv::StringRecord) -> Result<()> {
    if header.iter().ne(LABEL_HEADER) {
        return Err(Error::Format { format: "label", reason: format!("unexpected header {header:?}") });
    }
    Ok(())
}

impl<T: Real> TrainingSet<T> for FrameCorpus {
    fn len(&self) -> usize {
        self.meta.len()
    }

    fn label(&self, index: usize) -> Verdict {
        self.meta[index].label
    }

    fn load(&self, index: usize, out: &mut Vec<T>) -> Result<()> {
        let n = self.frame_len();
        let frame = EventFrame::from_data(
            self.width,
            self.height,
            self.data[index * n..][..n].iter().map(|&v| T::from_f64_lossy(f64::from(v))).collect(),
        );
        *out = to_classifier_input(&frame)?;
        Ok(())
    }
}

/// All three splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: FrameCorpus,
    pub val: FrameCorpus,
    pub test: FrameCorpus,
}

impl Dataset {
    pub fn save(&self, dir: &Path) -> Result<()> {
        for split in Split::ALL {
            self.get(split).save(dir, split.name())?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(Self {
            train: FrameCorpus::load(dir, "train")?,
            val: FrameCorpus::load(dir, "val")?,
            test: FrameCorpus::load(dir, "test")?,
        })
    }

    pub fn get(&self, split: Split) -> &FrameCorpus {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// The scene every part of the harness uses for a given preset and seed.
pub fn build_scene(cfg: &ExperimentConfig, lux: LuxPreset, flicker: FlickerConfig, seed: u64) -> Result<Scene> {
    Scene::new(SceneConfig::new(cfg.resolution, cfg.resolution, lux, seed), flicker)
}

/// Frames and per-millisecond event counts of one clip.
#[derive(Debug, Clone)]
pub struct Clip {
    pub frames: Vec<EventFrame<f32>>,
    /// Unsigned event count per millisecond; bin `k` covers `(k, k + 1]` ms
    /// so that it lines up with the half-open frame windows.
    pub rate: Vec<f64>,
}

/// Simulates `seconds` of `spec` and returns every frame.
pub fn simulate_clip(cfg: &ExperimentConfig, spec: &ClipSpec, seconds: u32) -> Result<Clip> {
    let flicker = match spec.flicker {
        Some((f, phase)) => FlickerConfig { phase, ..FlickerConfig::half_sine(f, cfg.flicker_amplitude) },
        None => FlickerConfig::off(),
    };
    let scene = build_scene(cfg, spec.lux, flicker, spec.seed)?;
    let mut sensor = Sensor::<f32>::new(&scene, SensorConfig { bias_fo: spec.bias_fo, ..SensorConfig::default() })?;
    let mut acc = FrameAccumulator::<f32>::new(scene.width(), scene.height(), DEFAULT_DECAY, DEFAULT_WINDOW)?;
    let frames_per_second = (1.0 / DEFAULT_WINDOW).round() as usize;
    let mut rate = vec![0.0; seconds as usize * 1000];
    let mut frames = Vec::with_capacity(seconds as usize * frames_per_second);
    let mut events: Vec<Event> = Vec::new();
    for _ in 0..seconds as usize * frames_per_second {
        events.clear();
        sensor.advance_into(&scene, acc.next_end_us(), &mut events)?;
        for ev in &events {
            rate[(ev.t_us.saturating_sub(1) / 1000) as usize] += 1.0;
        }
        frames.push(acc.push(&events)?.clone());
    }
    Ok(Clip { frames, rate })
}

/// Biases on the controller's lattice, highest first.
pub fn bias_lattice() -> Vec<i32> {
    (BIAS_MIN..=BIAS_MAX).rev().step_by(5).collect()
}

/// Whether flicker at `frequency` still swings the photoreceptor output past
/// the ON threshold at `bias_fo`. The peak log swing of the flicker is
/// attenuated by both first-order stages; below the threshold the flicker
/// only reaches the comparator through noise.
pub fn flicker_visible(amplitude: f64, lux: LuxPreset, frequency: f64, bias_fo: i32) -> bool {
    let sensor = SensorConfig::default();
    let Ok(cutoff) = bias_to_cutoff(bias_fo) else {
        return false;
    };
    let ambient = lux.lux() * IRRADIANCE_PER_LUX;
    let swing = ((ambient * (1.0 + amplitude) + sensor.dark_irradiance) / (ambient + sensor.dark_irradiance)).ln();
    let gain = |fc: f64| 1.0 / (1.0 + (frequency / fc).powi(2)).sqrt();
    swing * gain(sensor.stage1_cutoff) * gain(cutoff) >= sensor.theta_on
}

/// Lattice biases at which flicker at `frequency` stays visible.
pub fn visible_biases(amplitude: f64, lux: LuxPreset, frequency: f64) -> Vec<i32> {
    bias_lattice().into_iter().filter(|&b| flicker_visible(amplitude, lux, frequency, b)).collect()
}

/// Draws a clip of the requested class.
pub fn random_clip(cfg: &ExperimentConfig, flicker: bool, rng: &mut impl Rng) -> ClipSpec {
    let lux = *cfg.lux.choose(rng).expect("validated config has lux presets");
    let seed = rng.gen();
    if flicker {
        let f = *cfg.frequencies.choose(rng).expect("validated config has frequencies");
        let mut biases = visible_biases(cfg.flicker_amplitude, lux, f);
        if biases.is_empty() {
            biases.push(BIAS_MAX);
        }
        let bias_fo = *biases.choose(rng).expect("non-empty");
        ClipSpec { lux, flicker: Some((f, rng.gen_range(0.0..std::f64::consts::TAU))), bias_fo, seed }
    } else {
        let bias_fo = *bias_lattice().choose(rng).expect("non-empty");
        ClipSpec { lux, flicker: None, bias_fo, seed }
    }
}

/// Builds one balanced split of `total` frames.
pub fn gen_split(cfg: &ExperimentConfig, split: Split, total: usize) -> Result<FrameCorpus> {
    cfg.validate()?;
    ensure!(total % 2 == 0, "split {} needs an even frame count, got {total}", split.name());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, split.stream()));
    let mut corpus = FrameCorpus::new(cfg.resolution, cfg.resolution);
    let mut remaining = [total / 2; 2];
    let mut clip = 0u32;
    while remaining.iter().any(|&r| r > 0) {
        // Alternate classes while both need frames.
        let flicker = if remaining[0] == 0 {
            true
        } else if remaining[1] == 0 {
            false
        } else {
            clip % 2 == 1
        };
        let spec = random_clip(cfg, flicker, &mut rng);
        let frames = simulate_clip(cfg, &spec, 1)?.frames;
        let class = spec.label().index();
        let take = remaining[class].min(FRAMES_PER_CLIP);
        for frame in frames.iter().skip(frames.len() - FRAMES_PER_CLIP).take(take) {
            corpus.push(
                frame,
                FrameMeta {
                    label: spec.label(),
                    frequency_hz: spec.flicker.map_or(0.0, |f| f.0),
                    lux: spec.lux,
                    bias_fo: spec.bias_fo,
                    clip,
                    frame_index: frame.frame_index,
                    seed: spec.seed,
                },
            );
        }
        remaining[class] -= take;
        clip += 1;
    }
    Ok(corpus)
}

pub fn gen_dataset(cfg: &ExperimentConfig, sizes: SplitSizes) -> Result<Dataset> {
    Ok(Dataset {
        train: gen_split(cfg, Split::Train, sizes.train)?,
        val: gen_split(cfg, Split::Val, sizes.val)?,
        test: gen_split(cfg, Split::Test, sizes.test)?,
    })
}

/// One frame of the classifier/oracle comparison stream.
#[derive(Debug, Clone)]
pub struct StreamFrame {
    pub frame: EventFrame<f32>,
    pub label: Verdict,
    /// Event counts per millisecond over the second ending with the frame.
    pub rate: Vec<f64>,
}

/// A mixed stream of `count` frames from two-second clips; each frame comes
/// with the full second of event rates that precedes its end.
pub fn mixed_stream(cfg: &ExperimentConfig, count: usize, seed: u64) -> Result<Vec<StreamFrame>> {
    cfg.validate()?;
    let frames_per_second = (1.0 / DEFAULT_WINDOW).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x6d69_7865_64));
    let mut out = Vec::with_capacity(count);
    let mut k = 0usize;
    while out.len() < count {
        let spec = random_clip(cfg, k % 2 == 1, &mut rng);
        let clip = simulate_clip(cfg, &spec, 2)?;
        for frame in clip.frames.into_iter().skip(frames_per_second) {
            if out.len() == count {
                break;
            }
            let end_ms = (frame.t_end * 1000.0).round() as usize;
            let rate = clip.rate[end_ms - 1000..end_ms].to_vec();
            out.push(StreamFrame { frame, label: spec.label(), rate });
        }
        k += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig { resolution: 32, frequencies: vec![50.0, 300.0], ..ExperimentConfig::default() }
    }

    #[test]
    fn visible_biases_follow_attenuation() {
        // A 40% swing stays visible down to roughly half the flicker frequency.
        assert_eq!(*visible_biases(0.4, LuxPreset::High, 500.0).last().unwrap(), 35);
        assert_eq!(*visible_biases(0.4, LuxPreset::High, 25.0).last().unwrap(), -30);
        assert!(visible_biases(0.4, LuxPreset::Low, 300.0).len() <= visible_biases(0.4, LuxPreset::High, 300.0).len());
        assert!(visible_biases(0.05, LuxPreset::High, 25.0).is_empty());
        assert_eq!(bias_lattice().len(), 19);
    }

    #[test]
    fn split_is_balanced_and_reproducible() {
        let cfg = small_cfg();
        let a = gen_split(&cfg, Split::Val, 22).unwrap();
        assert_eq!(a.len(), 22);
        assert_eq!(TrainingSet::<f32>::class_counts(&a), [11, 11]);
        for m in &a.meta {
            if m.label == Verdict::Flicker {
                assert!(flicker_visible(cfg.flicker_amplitude, m.lux, m.frequency_hz, m.bias_fo));
            } else {
                assert_eq!(m.frequency_hz, 0.0);
            }
            assert!(m.frame_index >= 2);
        }
        assert_eq!(a, gen_split(&cfg, Split::Val, 22).unwrap());
        assert_ne!(a.data, gen_split(&cfg, Split::Test, 22).unwrap().data);
    }

    #[test]
    fn corpus_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = gen_split(&small_cfg(), Split::Test, 4).unwrap();
        corpus.save(dir.path(), "test").unwrap();
        let back = FrameCorpus::load(dir.path(), "test").unwrap();
        assert_eq!(back, corpus);
        let rows = std::fs::read_to_string(dir.path().join("test.labels.csv")).unwrap().lines().count();
        assert_eq!(rows, 5);
    }

    #[test]
    fn label_count_must_match_frames() {
        let dir = tempfile::tempdir().unwrap();
        let mut corpus = gen_split(&small_cfg(), Split::Test, 4).unwrap();
        corpus.save(dir.path(), "x").unwrap();
        corpus.meta.pop();
        corpus.data.truncate(corpus.data.len() - corpus.frame_len());
        corpus.save(dir.path(), "y").unwrap();
        std::fs::copy(dir.path().join("y.labels.csv"), dir.path().join("x.labels.csv")).unwrap();
        assert!(FrameCorpus::load(dir.path(), "x").is_err());
    }

    #[test]
    fn stream_rates_cover_the_preceding_second() {
        let stream = mixed_stream(&small_cfg(), 12, 3).unwrap();
        assert_eq!(stream.len(), 12);
        assert!(stream.iter().all(|s| s.rate.len() == 1000));
        assert_eq!(stream[0].label, Verdict::NoFlicker);
        assert_eq!(stream[10].label, Verdict::Flicker);
        assert_eq!(stream[0].frame.frame_index, 11);
    }
}
