//! Closed-loop runs over the frequency x lux grid.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::{derive_seed, ExperimentConfig};
use super::dataset::build_scene;
use super::report::{run_name, sort_key, write_grid, write_timeseries, GridRow, SecondRow};
use crate::classifier::{CnnClassifier, CnnParams, FrameClassifier};
use crate::detector::{Detector, Template};
use crate::error::{ensure, Result};
use crate::formats::EventWriter;
use crate::pipeline::{run_loop, EventSink, LoopConfig, SecondRecord};
use crate::pixel::SensorConfig;
use crate::scene::{FlickerConfig, LuxPreset, Scene};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub lux: LuxPreset,
    /// `None` is the flicker-free control.
    pub frequency: Option<f64>,
}

impl Cell {
    pub fn name(&self) -> String {
        run_name(self.lux, self.frequency)
    }

    /// Depends only on the run seed and the cell, not on grid order.
    pub fn seed(&self, seed: u64) -> u64 {
        let lux = match self.lux {
            LuxPreset::High => 1,
            LuxPreset::Low => 2,
        };
        derive_seed(seed, self.frequency.unwrap_or(0.0).to_bits() ^ lux)
    }

    pub fn scene(&self, cfg: &ExperimentConfig) -> Result<Scene> {
        let flicker = match self.frequency {
            Some(f) => FlickerConfig::half_sine(f, cfg.flicker_amplitude),
            None => FlickerConfig::off(),
        };
        build_scene(cfg, self.lux, flicker, self.seed(cfg.seed))
    }
}

/// Every cell of the grid in canonical report order.
pub fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &lux in &cfg.lux {
        out.extend(cfg.frequencies.iter().map(|&f| Cell { lux, frequency: Some(f) }));
        if cfg.control {
            out.push(Cell { lux, frequency: None });
        }
    }
    out.sort_by(|a, b| sort_key(a.lux, a.frequency).partial_cmp(&sort_key(b.lux, b.frequency)).expect("finite"));
    out.dedup();
    out
}

pub fn loop_config(cfg: &ExperimentConfig) -> LoopConfig {
    LoopConfig { duration_s: cfg.duration_s, initial_bias: cfg.initial_bias, ..LoopConfig::default() }
}

/// Runs one cell without touching the file system.
pub fn simulate_cell(
    cfg: &ExperimentConfig,
    cell: Cell,
    classifier: &mut dyn FrameClassifier,
    sink: Option<&mut dyn EventSink>,
) -> Result<Vec<SecondRecord>> {
    cfg.validate()?;
    let scene = cell.scene(cfg)?;
    let target = scene.config().target.as_ref().expect("harness scenes carry a target");
    let detector = Detector::new(Template::from_target(target));
    run_loop::<f32, dyn FrameClassifier>(&scene, SensorConfig::default(), classifier, &detector, &loop_config(cfg), sink)
}

/// A finished run and where its files went.
#[derive(Debug, Clone)]
pub struct CellRun {
    pub cell: Cell,
    pub records: Vec<SecondRecord>,
    pub timeseries: PathBuf,
    pub events: Option<PathBuf>,
    /// Wall-clock time of the simulation; never written to reports.
    pub elapsed_s: f64,
}

impl CellRun {
    pub fn rows(&self) -> Vec<SecondRow> {
        self.records.iter().map(SecondRow::from).collect()
    }

    pub fn grid_row(&self) -> Result<GridRow> {
        GridRow::from_rows(self.cell.lux, self.cell.frequency, &self.rows())
    }
}

pub fn timeseries_dir(out: &Path) -> PathBuf {
    out.join("timeseries")
}

/// Runs one cell and writes its time series (and event log if configured).
pub fn execute_cell(cfg: &ExperimentConfig, cell: Cell, classifier: &mut dyn FrameClassifier) -> Result<CellRun> {
    let series_dir = timeseries_dir(&cfg.out_dir);
    std::fs::create_dir_all(&series_dir)?;
    let started = Instant::now();
    let (records, events) = match &cfg.events_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(format!("{}.evt", cell.name()));
            let file = BufWriter::with_capacity(1 << 20, File::create(&path)?);
            let mut writer = EventWriter::new(file, cfg.resolution, cfg.resolution)?;
            let records = simulate_cell(cfg, cell, classifier, Some(&mut writer))?;
            writer.finish()?;
            (records, Some(path))
        }
        None => (simulate_cell(cfg, cell, classifier, None)?, None),
    };
    let elapsed_s = started.elapsed().as_secs_f64();
    let timeseries = series_dir.join(format!("{}.csv", cell.name()));
    let run = CellRun { cell, records, timeseries, events, elapsed_s };
    write_timeseries(BufWriter::new(File::create(&run.timeseries)?), &run.rows())?;
    Ok(run)
}

pub fn grid_path(out: &Path) -> PathBuf {
    out.join("grid.csv")
}

/// Runs every cell with the CNN, writes per-run files and `grid.csv`.
/// `progress` sees each run as soon as it finishes.
pub fn run_grid(
    cfg: &ExperimentConfig,
    params: &CnnParams<f32>,
    mut progress: impl FnMut(&CellRun),
) -> Result<Vec<CellRun>> {
    cfg.validate()?;
    let cells = cells(cfg);
    ensure!(!cells.is_empty(), "empty grid");
    let mut classifier = CnnClassifier::new(params.clone());
    let mut runs = Vec::with_capacity(cells.len());
    for cell in cells {
        let run = execute_cell(cfg, cell, &mut classifier)?;
        progress(&run);
        runs.push(run);
    }
    let rows = runs.iter().map(CellRun::grid_row).collect::<Result<Vec<_>>>()?;
    write_grid(BufWriter::new(File::create(grid_path(&cfg.out_dir))?), &rows)?;
    Ok(runs)
}
