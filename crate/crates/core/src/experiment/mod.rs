//! Experiment orchestration: configuration, labelled corpora, the grid of
//! closed-loop runs and their reports.

pub mod config;
pub mod dataset;
pub mod grid;
pub mod report;

pub use config::ExperimentConfig;
pub use dataset::{gen_dataset, Dataset, FrameCorpus, SplitSizes};
pub use grid::{run_grid, Cell, CellRun};
