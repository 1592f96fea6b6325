use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ExperimentRecord, Status};
use crate::aggregation::SimpleAggregation;
use crate::autodiff::Rng;
use crate::error::{Error, Result};
use crate::model::AggregationSpec;
use crate::training::{train_with, TrainConfig, TrainOptions};

/// Repeats per configuration unless asked otherwise.
pub const DEFAULT_REPEATS: usize = 5;

/// Aggregation pairs `(equivariant, final)` crossed with repeats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub cells: Vec<(AggregationSpec, AggregationSpec)>,
    pub repeats: usize,
}

impl Grid {
    pub fn new(cells: Vec<(AggregationSpec, AggregationSpec)>, repeats: usize) -> Self {
        Grid { cells, repeats }
    }

    /// Every pairing of `equivariant` with `last`.
    pub fn cross(equivariant: &[AggregationSpec], last: &[AggregationSpec], repeats: usize) -> Self {
        let cells = equivariant
            .iter()
            .flat_map(|&e| last.iter().map(move |&a| (e, a)))
            .collect();
        Grid { cells, repeats }
    }

    /// The 9 base-aggregation pairs of one recurrence setting.
    pub fn recurrence_row(recurrent_equiv: bool, recurrent_final: bool, repeats: usize) -> Self {
        let wrap = |recurrent: bool| -> Vec<AggregationSpec> {
            SimpleAggregation::GRID
                .iter()
                .map(|&r| {
                    if recurrent {
                        AggregationSpec::recurrent(r)
                    } else {
                        AggregationSpec::simple(r)
                    }
                })
                .collect()
        };
        Self::cross(&wrap(recurrent_equiv), &wrap(recurrent_final), repeats)
    }

    /// Recurrent or simple equivariant layers crossed with recurrent or
    /// simple final aggregation, all built on `reduce`.
    pub fn recurrence_table(reduce: SimpleAggregation, repeats: usize) -> Self {
        let (s, r) = (AggregationSpec::simple(reduce), AggregationSpec::recurrent(reduce));
        Grid::new(vec![(s, s), (s, r), (r, s), (r, r)], repeats)
    }

    pub fn len(&self) -> usize {
        self.cells.len() * self.repeats
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One config per `(cell, repeat)`, cell-major. Repeat `r` uses the same
    /// seed for every cell, so configurations see identical data streams.
    pub fn configs(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::with_capacity(self.len());
        for &(equivariant, aggregation) in &self.cells {
            for r in 0..self.repeats {
                out.push(TrainConfig {
                    equivariant,
                    aggregation,
                    seed: derive_seed(base.seed, r),
                    ..base.clone()
                });
            }
        }
        out
    }
}

/// Seed of repeat `r` under `base`.
pub fn derive_seed(base: u64, repeat: usize) -> u64 {
    Rng::new(base).child_indexed("repeat", repeat as u64).seed()
}

#[derive(Clone, Debug, Default)]
pub struct GridOptions {
    /// Records go to `<dir>/records/<run_id>.json` as they finish; existing
    /// files for the same config are reused instead of retrained.
    pub out_dir: Option<PathBuf>,
    /// Worker threads; 0 means one per available core.
    pub workers: usize,
    pub train: TrainOptions,
}

pub fn run_grid(base: &TrainConfig, grid: &Grid, options: &GridOptions) -> Result<Vec<ExperimentRecord>> {
    if grid.is_empty() {
        return Err(Error::EmptyInput);
    }
    run_configs(&grid.configs(base), options)
}

/// Trains every config, isolating failures in the record status. Results
/// follow the order of `configs` whatever the number of workers.
pub fn run_configs(configs: &[TrainConfig], options: &GridOptions) -> Result<Vec<ExperimentRecord>> {
    let dir = options.out_dir.as_ref().map(|d| d.join("records"));
    if let Some(d) = &dir {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let workers = match options.workers {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        w => w,
    }
    .min(configs.len())
    .max(1);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<ExperimentRecord>>> = Mutex::new(vec![None; configs.len()]);
    let write_lock = Mutex::new(());
    let first_error: Mutex<Option<Error>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= configs.len() {
                    break;
                }
                let config = &configs[i];
                let cached = dir.as_ref().and_then(|d| load_cached(&record_path(d, config), config));
                let record = match cached {
                    Some(r) => r,
                    None => {
                        let record = run_one(config, &options.train);
                        if let Some(d) = &dir {
                            let _guard = write_lock.lock().unwrap();
                            if let Err(e) = write_atomic(&record_path(d, config), &record) {
                                first_error.lock().unwrap().get_or_insert(e);
                            }
                        }
                        record
                    }
                };
                slots.lock().unwrap()[i] = Some(record);
            });
        }
    });
    if let Some(e) = first_error.into_inner().unwrap() {
        return Err(e);
    }
    Ok(slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect())
}

fn run_one(config: &TrainConfig, options: &TrainOptions) -> ExperimentRecord {
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| train_with(config, options)));
    match outcome {
        Ok(Ok((_, record))) => record,
        Ok(Err(e)) => failed_record(config, e.to_string()),
        Err(panic) => {
            let message = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            failed_record(config, message)
        }
    }
}

/// Record of a run that never produced a model.
pub fn failed_record(config: &TrainConfig, message: String) -> ExperimentRecord {
    ExperimentRecord {
        run_id: format!("{}__s{}", config.config_id(), config.seed),
        config_id: config.config_id(),
        fingerprint: config.fingerprint(),
        seed: config.seed,
        agg_equiv: config.equivariant.to_string(),
        agg_final: config.aggregation.to_string(),
        status: Status::Failed { message },
        steps: 0,
        seconds: 0.0,
        losses: Vec::new(),
        metrics: Default::default(),
        notes: Default::default(),
        config: config.clone(),
    }
}

/// File of `config`'s record inside a records directory.
pub fn record_path(dir: &Path, config: &TrainConfig) -> PathBuf {
    let id: String = format!("{}__s{}", config.config_id(), config.seed)
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '+'
            }
        })
        .collect();
    dir.join(format!("{id}.json"))
}

fn load_cached(path: &Path, config: &TrainConfig) -> Option<ExperimentRecord> {
    let text = fs::read_to_string(path).ok()?;
    let record: ExperimentRecord = serde_json::from_str(&text).ok()?;
    (record.fingerprint == config.fingerprint() && &record.config == config).then_some(record)
}

fn write_atomic(path: &Path, record: &ExperimentRecord) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    let text = serde_json::to_string_pretty(record)?;
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Every record in `<dir>/records`, sorted by run id.
pub fn load_records(dir: &Path) -> Result<Vec<ExperimentRecord>> {
    let records_dir = dir.join("records");
    let entries = fs::read_dir(&records_dir).map_err(|e| Error::io(&records_dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&records_dir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            out.push(serde_json::from_str::<ExperimentRecord>(&text)?);
        }
    }
    out.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    Ok(out)
}
