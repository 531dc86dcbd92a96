use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use autobias::classifier::train::{evaluate, train_with, TrainConfig};
use autobias::classifier::{Architecture, CnnClassifier};
use autobias::experiment::config::parse_lux;
use autobias::experiment::dataset::{gen_split, Dataset, Split, SplitSizes};
use autobias::experiment::grid::{execute_cell, grid_path, run_grid, timeseries_dir, Cell, CellRun};
use autobias::experiment::report::{report_from_dir, write_grid, write_training_log};
use autobias::experiment::ExperimentConfig;
use autobias::formats::{read_params, write_params};
use autobias::Cnn32;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "autobias", version, about = "Flicker-aware bias control for a simulated event camera")]
struct Cli {
    /// `key = value` file applied before the flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Overrides {
    /// Comma-separated flicker frequencies in Hz.
    #[arg(long, global = true)]
    freq: Option<String>,
    /// Comma-separated lux presets: high, low, 1000 or 20.
    #[arg(long, global = true)]
    lux: Option<String>,
    /// Closed-loop run length in seconds.
    #[arg(long, global = true)]
    duration: Option<u32>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Side of the square sensor in pixels.
    #[arg(long, global = true)]
    resolution: Option<u16>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    bias_init: Option<i32>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory for EVT1 event logs; omit to skip them.
    #[arg(long, global = true)]
    events_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the labelled train/val/test corpus.
    GenDataset {
        #[arg(long, default_value_t = 3560)]
        train: usize,
        #[arg(long, default_value_t = 552)]
        val: usize,
        #[arg(long, default_value_t = 552)]
        test: usize,
    },
    /// Train the flicker classifier on a generated corpus.
    Train {
        /// Corpus directory; defaults to `<out>/dataset`.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
    },
    /// One closed-loop run at the first configured frequency and lux.
    Run {
        /// Parameters file; defaults to `<out>/model.cnn`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Run without flicker.
        #[arg(long)]
        control: bool,
    },
    /// Closed-loop runs over every frequency and lux preset.
    Grid {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Rebuild `grid.csv` from the time series in `<out>/timeseries`.
    Report,
}

fn config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
    }
    let o = &cli.overrides;
    if let Some(v) = &o.freq {
        cfg.set("frequencies", v)?;
    }
    if let Some(v) = &o.lux {
        cfg.lux = v.split(',').map(parse_lux).collect::<autobias::Result<_>>()?;
    }
    cfg.duration_s = o.duration.unwrap_or(cfg.duration_s);
    cfg.seed = o.seed.unwrap_or(cfg.seed);
    cfg.resolution = o.resolution.unwrap_or(cfg.resolution);
    cfg.initial_bias = o.bias_init.unwrap_or(cfg.initial_bias);
    if let Some(v) = &o.out {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = &o.events_out {
        cfg.events_dir = Some(v.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn model_path(cfg: &ExperimentConfig, model: &Option<PathBuf>) -> PathBuf {
    model.clone().unwrap_or_else(|| cfg.out_dir.join("model.cnn"))
}

fn load_model(path: &Path) -> Result<Cnn32> {
    let file = File::open(path).with_context(|| format!("opening model {} (run `train` first)", path.display()))?;
    Ok(read_params(BufReader::new(file))?)
}

fn print_run(run: &CellRun) {
    let last = run.records.last().expect("non-empty run");
    let first = &run.records[0];
    println!(
        "{:<12} bias {:>3} -> {:>3}  AG {:.4} -> {:.4}  det {:.2} -> {:.2}  ({:.1} s)",
        run.cell.name(),
        first.summary.bias_fo,
        last.state.bias_fo,
        first.summary.mean_ag,
        last.summary.mean_ag,
        first.summary.detection_success,
        last.summary.detection_success,
        run.elapsed_s
    );
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = config(cli)?;
    match &cli.command {
        Command::GenDataset { train, val, test } => {
            let sizes = SplitSizes { train: *train, val: *val, test: *test };
            let dir = cfg.out_dir.join("dataset");
            for split in Split::ALL {
                let corpus = gen_split(&cfg, split, sizes.get(split))?;
                corpus.save(&dir, split.name())?;
                println!("{}: {} frames -> {}", split.name(), corpus.len(), dir.display());
            }
        }
        Command::Train { data, epochs } => {
            let dir = data.clone().unwrap_or_else(|| cfg.out_dir.join("dataset"));
            let data = Dataset::load(&dir).with_context(|| format!("loading corpus from {}", dir.display()))?;
            let train_cfg = TrainConfig { epochs: *epochs, seed: cfg.seed, ..TrainConfig::default() };
            let outcome = train_with::<f32>(Architecture::STANDARD, &data.train, &data.val, &train_cfg, |e| {
                println!(
                    "epoch {:>2}: loss {:.4}  train {:.4}  val {:.4}",
                    e.epoch, e.train_loss, e.train_accuracy, e.val_accuracy
                );
            })?;
            std::fs::create_dir_all(&cfg.out_dir)?;
            let path = cfg.out_dir.join("model.cnn");
            write_params(BufWriter::new(File::create(&path)?), &outcome.params)?;
            write_training_log(BufWriter::new(File::create(cfg.out_dir.join("training.csv"))?), &outcome.history)?;
            let test = evaluate(&outcome.params, &data.test)?;
            println!("best epoch {} of {}; test accuracy {:.4}", outcome.best_epoch, outcome.history.len(), test);
            println!("model -> {}", path.display());
        }
        Command::Run { model, control } => {
            let params = load_model(&model_path(&cfg, model))?;
            let cell = Cell { lux: cfg.lux[0], frequency: (!control).then(|| cfg.frequencies[0]) };
            let run = execute_cell(&cfg, cell, &mut CnnClassifier::new(params))?;
            print_run(&run);
            println!("time series -> {}", run.timeseries.display());
            if let Some(events) = &run.events {
                println!("events -> {}", events.display());
            }
        }
        Command::Grid { model } => {
            let params = load_model(&model_path(&cfg, model))?;
            run_grid(&cfg, &params, print_run)?;
            println!("grid -> {}", grid_path(&cfg.out_dir).display());
        }
        Command::Report => {
            let rows = report_from_dir(&timeseries_dir(&cfg.out_dir))?;
            let path = grid_path(&cfg.out_dir);
            write_grid(BufWriter::new(File::create(&path)?), &rows)?;
            println!("{} runs -> {}", rows.len(), path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
