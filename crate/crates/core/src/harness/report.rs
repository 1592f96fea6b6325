//! CSV and JSON artifacts. Every report is written as a `<stem>.csv` with a
//! fixed column order next to a `<stem>.json` holding the same rows, or the
//! full structures they came from.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::em::EmComparison;
use super::stats::BootstrapRow;
use super::sweep::SweepResult;
use super::{metric, ExperimentRecord};
use crate::error::{Error, Result};

pub const RECORD_COLUMNS: [&str; 11] = [
    "run_id",
    "config_id",
    "seed",
    "agg_equiv",
    "agg_final",
    "status",
    "best_mse",
    "center_mse",
    "radius_mse",
    "steps",
    "seconds",
];

pub const SWEEP_COLUMNS: [&str; 11] = [
    "n",
    "estimate_p5",
    "estimate_p25",
    "estimate_p50",
    "estimate_p75",
    "estimate_p95",
    "error_p5",
    "error_p25",
    "error_p50",
    "error_p75",
    "error_p95",
];

pub const EM_COLUMNS: [&str; 6] = [
    "n",
    "status",
    "log_ratio_model_minus_em",
    "log_ratio_em_minus_model",
    "model_median",
    "em_median",
];

pub const BOOTSTRAP_COLUMNS: [&str; 6] = ["group", "metric", "runs", "batch", "resamples", "median_best"];

/// One line of the grid CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub run_id: String,
    pub config_id: String,
    pub seed: u64,
    pub agg_equiv: String,
    pub agg_final: String,
    pub status: String,
    pub best_mse: Option<f64>,
    pub center_mse: Option<f64>,
    pub radius_mse: Option<f64>,
    pub steps: usize,
    pub seconds: f64,
}

impl From<&ExperimentRecord> for RecordRow {
    fn from(r: &ExperimentRecord) -> Self {
        RecordRow {
            run_id: r.run_id.clone(),
            config_id: r.config_id.clone(),
            seed: r.seed,
            agg_equiv: r.agg_equiv.clone(),
            agg_final: r.agg_final.clone(),
            status: r.status.to_string(),
            best_mse: r.metric(metric::BEST_MSE),
            center_mse: r.metric(metric::CENTER_MSE),
            radius_mse: r.metric(metric::RADIUS_MSE),
            steps: r.steps,
            seconds: r.seconds,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub estimate_p5: f64,
    pub estimate_p25: f64,
    pub estimate_p50: f64,
    pub estimate_p75: f64,
    pub estimate_p95: f64,
    pub error_p5: f64,
    pub error_p25: f64,
    pub error_p50: f64,
    pub error_p75: f64,
    pub error_p95: f64,
}

impl SweepRow {
    pub fn rows(sweep: &SweepResult) -> Vec<SweepRow> {
        sweep
            .summaries
            .iter()
            .map(|s| SweepRow {
                n: s.n,
                estimate_p5: s.estimate.p5,
                estimate_p25: s.estimate.p25,
                estimate_p50: s.estimate.p50,
                estimate_p75: s.estimate.p75,
                estimate_p95: s.estimate.p95,
                error_p5: s.error.p5,
                error_p25: s.error.p25,
                error_p50: s.error.p50,
                error_p75: s.error.p75,
                error_p95: s.error.p95,
            })
            .collect()
    }
}

/// One size of an EM comparison; the two ratio columns carry opposite signs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmCsvRow {
    pub n: usize,
    pub status: String,
    /// Positive when the model beats EM.
    pub log_ratio_model_minus_em: Option<f64>,
    /// Negative when the model beats EM.
    pub log_ratio_em_minus_model: Option<f64>,
    pub model_median: f64,
    pub em_median: Option<f64>,
}

impl EmCsvRow {
    pub fn rows(cmp: &EmComparison) -> Vec<EmCsvRow> {
        cmp.rows
            .iter()
            .map(|r| EmCsvRow {
                n: r.n,
                status: r.status.to_string(),
                log_ratio_model_minus_em: r.log_ratio,
                log_ratio_em_minus_model: r.log_ratio_em_minus_model(),
                model_median: r.model_median,
                em_median: r.em_median,
            })
            .collect()
    }
}

/// Paths of a written `<stem>.csv` / `<stem>.json` pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Written {
    pub csv: PathBuf,
    pub json: PathBuf,
}

fn pair(dir: &Path, stem: &str) -> Result<Written> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(Written {
        csv: dir.join(format!("{stem}.csv")),
        json: dir.join(format!("{stem}.json")),
    })
}

/// CSV with `columns` as header even when `rows` is empty.
pub fn write_csv<T: Serialize>(path: &Path, columns: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    w.write_record(columns).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::Domain(format!("{}: {kind:?}", path.display())),
    }
}

/// Grid table plus the full records, configs included, as JSON.
pub fn write_records(dir: &Path, stem: &str, records: &[ExperimentRecord]) -> Result<Written> {
    let out = pair(dir, stem)?;
    let rows: Vec<RecordRow> = records.iter().map(RecordRow::from).collect();
    write_csv(&out.csv, &RECORD_COLUMNS, &rows)?;
    write_json(&out.json, records)?;
    Ok(out)
}

pub fn write_sweep(dir: &Path, stem: &str, sweep: &SweepResult) -> Result<Written> {
    let out = pair(dir, stem)?;
    write_csv(&out.csv, &SWEEP_COLUMNS, &SweepRow::rows(sweep))?;
    write_json(&out.json, sweep)?;
    Ok(out)
}

pub fn write_em(dir: &Path, stem: &str, cmp: &EmComparison) -> Result<Written> {
    let out = pair(dir, stem)?;
    write_csv(&out.csv, &EM_COLUMNS, &EmCsvRow::rows(cmp))?;
    write_json(&out.json, cmp)?;
    Ok(out)
}

pub fn write_bootstrap(dir: &Path, stem: &str, rows: &[BootstrapRow]) -> Result<Written> {
    let out = pair(dir, stem)?;
    write_csv(&out.csv, &BOOTSTRAP_COLUMNS, rows)?;
    write_json(&out.json, rows)?;
    Ok(out)
}
