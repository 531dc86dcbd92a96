//! CSV reports: one time series per run and a before/after grid summary
//! that can be rebuilt from the time series alone.

use std::io::Write;
use std::path::Path;

use crate::classifier::train::EpochStats;
use crate::error::{ensure, Error, Result};
use crate::pipeline::SecondRecord;
use crate::scene::LuxPreset;

/// Columns of the per-second time series. `bias_fo` is the bias the second
/// ran at; `next_bias_fo` is what the controller chose afterwards.
pub const TIMESERIES_HEADER: [&str; 12] = [
    "second",
    "bias_fo",
    "next_bias_fo",
    "action",
    "exhausted",
    "flicker_frames",
    "total_frames",
    "mean_ag",
    "mean_any_conf",
    "mean_target_conf",
    "detection_success",
    "event_count",
];

/// Columns of the grid summary. `*_before` is second 1 and `*_after` the
/// final second. Confidence and detection deltas are absolute percentage
/// points; the AG delta is the relative change in percent.
pub const GRID_HEADER: [&str; 17] = [
    "lux",
    "frequency_hz",
    "any_conf_before",
    "any_conf_after",
    "delta_any_conf_pp",
    "target_conf_before",
    "target_conf_after",
    "delta_target_conf_pp",
    "detection_before",
    "detection_after",
    "delta_detection_pp",
    "ag_before",
    "ag_after",
    "delta_ag_pct",
    "final_bias_fo",
    "exhausted",
    "final10_flicker_frames",
];

/// One row of the time series.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondRow {
    pub second: u32,
    pub bias_fo: i32,
    pub next_bias_fo: i32,
    pub action: String,
    pub exhausted: bool,
    pub flicker_frames: usize,
    pub total_frames: usize,
    pub mean_ag: f64,
    pub mean_any_conf: f64,
    pub mean_target_conf: f64,
    pub detection_success: f64,
    pub event_count: usize,
}

impl From<&SecondRecord> for SecondRow {
    fn from(r: &SecondRecord) -> Self {
        Self {
            second: r.second,
            bias_fo: r.summary.bias_fo,
            next_bias_fo: r.state.bias_fo,
            action: r.action.as_str().to_string(),
            exhausted: r.state.exhausted,
            flicker_frames: r.summary.flicker_frames,
            total_frames: r.summary.total_frames,
            mean_ag: r.summary.mean_ag,
            mean_any_conf: r.summary.mean_any_conf,
            mean_target_conf: r.summary.mean_target_conf,
            detection_success: r.summary.detection_success,
            event_count: r.event_count,
        }
    }
}

fn bad(format: &'static str, reason: String) -> Error {
    Error::Format { format, reason }
}

fn check_header(found: &csv::StringRecord, expected: &[&str], format: &'static str) -> Result<()> {
    if found.iter().ne(expected.iter().copied()) {
        return Err(bad(format, format!("unexpected header {found:?}")));
    }
    Ok(())
}

/// Floats are written in shortest round-trip form so that reading the file
/// back reproduces every value exactly.
pub fn write_timeseries<W: Write>(w: W, rows: &[SecondRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TIMESERIES_HEADER)?;
    for r in rows {
        out.write_record([
            r.second.to_string(),
            r.bias_fo.to_string(),
            r.next_bias_fo.to_string(),
            r.action.clone(),
            u8::from(r.exhausted).to_string(),
            r.flicker_frames.to_string(),
            r.total_frames.to_string(),
            r.mean_ag.to_string(),
            r.mean_any_conf.to_string(),
            r.mean_target_conf.to_string(),
            r.detection_success.to_string(),
            r.event_count.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_timeseries<R: std::io::Read>(r: R) -> Result<Vec<SecondRow>> {
    let mut reader = csv::Reader::from_reader(r);
    check_header(reader.headers()?, &TIMESERIES_HEADER, "timeseries")?;
    let mut rows = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record?;
        ensure_len(&record, TIMESERIES_HEADER.len(), n)?;
        let parse_err = |i: usize| bad("timeseries", format!("row {}: bad {}", n + 1, TIMESERIES_HEADER[i]));
        macro_rules! col {
            ($i:expr) => {
                record[$i].parse().map_err(|_| parse_err($i))?
            };
        }
        rows.push(SecondRow {
            second: col!(0),
            bias_fo: col!(1),
            next_bias_fo: col!(2),
            action: record[3].to_string(),
            exhausted: match &record[4] {
                "0" => false,
                "1" => true,
                _ => return Err(parse_err(4)),
            },
            flicker_frames: col!(5),
            total_frames: col!(6),
            mean_ag: col!(7),
            mean_any_conf: col!(8),
            mean_target_conf: col!(9),
            detection_success: col!(10),
            event_count: col!(11),
        });
    }
    Ok(rows)
}

fn ensure_len(record: &csv::StringRecord, len: usize, row: usize) -> Result<()> {
    if record.len() != len {
        return Err(bad("timeseries", format!("row {}: {} columns, expected {len}", row + 1, record.len())));
    }
    Ok(())
}

/// Before/after comparison of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub lux: LuxPreset,
    /// `None` for the flicker-free control.
    pub frequency: Option<f64>,
    pub before: SecondRow,
    pub after: SecondRow,
    pub final10_flicker_frames: usize,
}

impl GridRow {
    pub fn from_rows(lux: LuxPreset, frequency: Option<f64>, rows: &[SecondRow]) -> Result<Self> {
        ensure!(rows.len() >= 2, "a run needs at least two seconds, got {}", rows.len());
        let tail = &rows[rows.len().saturating_sub(10)..];
        Ok(Self {
            lux,
            frequency,
            before: rows[0].clone(),
            after: rows[rows.len() - 1].clone(),
            final10_flicker_frames: tail.iter().map(|r| r.flicker_frames).sum(),
        })
    }

    pub fn delta_any_conf_pp(&self) -> f64 {
        100.0 * (self.after.mean_any_conf - self.before.mean_any_conf)
    }

    pub fn delta_target_conf_pp(&self) -> f64 {
        100.0 * (self.after.mean_target_conf - self.before.mean_target_conf)
    }

    pub fn delta_detection_pp(&self) -> f64 {
        100.0 * (self.after.detection_success - self.before.detection_success)
    }

    /// Relative AG change; zero when the first second had no gradient.
    pub fn delta_ag_pct(&self) -> f64 {
        if self.before.mean_ag == 0.0 {
            0.0
        } else {
            100.0 * (self.after.mean_ag - self.before.mean_ag) / self.before.mean_ag
        }
    }
}

pub fn frequency_label(frequency: Option<f64>) -> String {
    frequency.map_or_else(|| "off".to_string(), |f| f.to_string())
}

pub fn write_grid<W: Write>(w: W, rows: &[GridRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(GRID_HEADER)?;
    let f = |v: f64| format!("{v:.4}");
    for r in rows {
        out.write_record([
            r.lux.name().to_string(),
            frequency_label(r.frequency),
            f(r.before.mean_any_conf),
            f(r.after.mean_any_conf),
            f(r.delta_any_conf_pp()),
            f(r.before.mean_target_conf),
            f(r.after.mean_target_conf),
            f(r.delta_target_conf_pp()),
            f(r.before.detection_success),
            f(r.after.detection_success),
            f(r.delta_detection_pp()),
            f(r.before.mean_ag),
            f(r.after.mean_ag),
            f(r.delta_ag_pct()),
            r.after.next_bias_fo.to_string(),
            u8::from(r.after.exhausted).to_string(),
            r.final10_flicker_frames.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// File stem of a run's time series, e.g. `high_50hz` or `low_off`.
pub fn run_name(lux: LuxPreset, frequency: Option<f64>) -> String {
    match frequency {
        Some(f) => format!("{}_{}hz", lux.name(), f),
        None => format!("{}_off", lux.name()),
    }
}

pub fn parse_run_name(name: &str) -> Option<(LuxPreset, Option<f64>)> {
    let (lux, rest) = name.split_once('_')?;
    let lux = match lux {
        "high" => LuxPreset::High,
        "low" => LuxPreset::Low,
        _ => return None,
    };
    if rest == "off" {
        return Some((lux, None));
    }
    let f: f64 = rest.strip_suffix("hz")?.parse().ok()?;
    Some((lux, Some(f)))
}

/// Canonical row order: high lux first, ascending frequency, control last.
pub fn sort_key(lux: LuxPreset, frequency: Option<f64>) -> (u8, u8, f64) {
    let l = match lux {
        LuxPreset::High => 0,
        LuxPreset::Low => 1,
    };
    (l, u8::from(frequency.is_none()), frequency.unwrap_or(0.0))
}

/// Rebuilds the grid summary from every time series in `dir`.
pub fn report_from_dir(dir: &Path) -> Result<Vec<GridRow>> {
    let mut rows = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let Some((lux, freq)) = path.file_stem().and_then(|s| s.to_str()).and_then(parse_run_name) else {
            continue;
        };
        let series = read_timeseries(std::fs::File::open(&path)?)?;
        rows.push(GridRow::from_rows(lux, freq, &series).map_err(|e| match e {
            Error::Contract(msg) => bad("timeseries", format!("{}: {msg}", path.display())),
            other => other,
        })?);
    }
    ensure!(!rows.is_empty(), "no time series found in {}", dir.display());
    rows.sort_by(|a, b| sort_key(a.lux, a.frequency).partial_cmp(&sort_key(b.lux, b.frequency)).expect("finite"));
    Ok(rows)
}

pub const TRAINING_HEADER: [&str; 4] = ["epoch", "train_loss", "train_accuracy", "val_accuracy"];

pub fn write_training_log<W: Write>(w: W, history: &[EpochStats]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRAINING_HEADER)?;
    for h in history {
        out.write_record([
            h.epoch.to_string(),
            h.train_loss.to_string(),
            h.train_accuracy.to_string(),
            h.val_accuracy.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(second: u32, ag: f64, conf: f64, det: f64) -> SecondRow {
        SecondRow {
            second,
            bias_fo: 55,
            next_bias_fo: 50,
            action: "lower".into(),
            exhausted: false,
            flicker_frames: 7,
            total_frames: 10,
            mean_ag: ag,
            mean_any_conf: conf,
            mean_target_conf: conf / 2.0,
            detection_success: det,
            event_count: 1234,
        }
    }

    #[test]
    fn timeseries_round_trips_exactly() {
        let rows = vec![row(1, 0.1 + 0.2, 1.0 / 3.0, 0.4), row(2, 1e-17, 0.7, 1.0)];
        let mut buf = Vec::new();
        write_timeseries(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), TIMESERIES_HEADER.join(","));
        assert_eq!(text.lines().count(), 3);
        assert_eq!(read_timeseries(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(read_timeseries("second,bias\n1,55\n".as_bytes()).is_err());
    }

    #[test]
    fn deltas() {
        let rows = vec![row(1, 0.5, 0.4, 0.2), row(2, 0.4, 0.5, 0.5), row(3, 0.2, 0.6, 0.9)];
        let g = GridRow::from_rows(LuxPreset::High, Some(50.0), &rows).unwrap();
        assert!((g.delta_ag_pct() + 60.0).abs() < 1e-9);
        assert!((g.delta_any_conf_pp() - 20.0).abs() < 1e-9);
        assert!((g.delta_target_conf_pp() - 10.0).abs() < 1e-9);
        assert!((g.delta_detection_pp() - 70.0).abs() < 1e-9);
        assert_eq!(g.final10_flicker_frames, 21);
    }

    #[test]
    fn run_names_round_trip() {
        for (lux, f) in [(LuxPreset::High, Some(25.0)), (LuxPreset::Low, None), (LuxPreset::Low, Some(2.5))] {
            assert_eq!(parse_run_name(&run_name(lux, f)), Some((lux, f)));
        }
        assert_eq!(parse_run_name("grid"), None);
    }

    #[test]
    fn grid_has_fixed_header() {
        let rows = vec![row(1, 0.5, 0.4, 0.2), row(2, 0.4, 0.5, 0.5)];
        let g = GridRow::from_rows(LuxPreset::Low, None, &rows).unwrap();
        let mut buf = Vec::new();
        write_grid(&mut buf, &[g]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), GRID_HEADER.join(","));
        assert!(lines.next().unwrap().starts_with("low,off,0.4000,0.5000,10.0000,"));
    }
}
