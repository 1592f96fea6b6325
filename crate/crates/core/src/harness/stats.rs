use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ExperimentRecord;
use crate::autodiff::Rng;
use crate::error::{Error, Result};

/// Linear-interpolation quantile of sorted values, `q ∈ [0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// The five quantiles drawn in interval plots.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p5: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
}

impl Percentiles {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p| quantile_sorted(&v, p);
        Ok(Percentiles {
            p5: q(0.05),
            p25: q(0.25),
            p50: q(0.5),
            p75: q(0.75),
            p95: q(0.95),
        })
    }

    /// Width of the central 90% interval.
    pub fn width90(&self) -> f64 {
        self.p95 - self.p5
    }

    pub fn width50(&self) -> f64 {
        self.p75 - self.p25
    }
}

/// Expected best result of a batch of `batch` experiments: the median over
/// `resamples` batches, drawn with replacement, of each batch's minimum.
pub fn bootstrap_peak(values: &[f64], batch: usize, resamples: usize, rng: &mut Rng) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if batch == 0 || resamples == 0 {
        return Err(Error::InvalidConfig("batch size and resamples must be positive".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Domain("bootstrap over NaN values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let minima: Vec<f64> = (0..resamples)
        .map(|_| {
            (0..batch)
                .map(|_| sorted[rng.below(sorted.len())])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    Ok(median(&minima))
}

/// How records are pooled before bootstrapping.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    /// One group per `config_id`.
    Config,
    /// One group per recurrence setting, e.g. `recurrent-equiv/simple-final`.
    Recurrence,
}

impl GroupBy {
    pub fn key(self, record: &ExperimentRecord) -> String {
        match self {
            GroupBy::Config => record.config_id.clone(),
            GroupBy::Recurrence => recurrence_label(
                record.config.equivariant.is_recurrent(),
                record.config.aggregation.is_recurrent(),
            ),
        }
    }
}

pub fn recurrence_label(equivariant: bool, last: bool) -> String {
    let kind = |r: bool| if r { "recurrent" } else { "simple" };
    format!("{}-equiv/{}-final", kind(equivariant), kind(last))
}

impl fmt::Display for GroupBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupBy::Config => "config",
            GroupBy::Recurrence => "recurrence",
        })
    }
}

impl FromStr for GroupBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "config" => Ok(GroupBy::Config),
            "recurrence" => Ok(GroupBy::Recurrence),
            _ => Err(Error::InvalidConfig(format!("unknown grouping `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRow {
    pub group: String,
    pub metric: String,
    /// Successful runs with the metric present.
    pub runs: usize,
    pub batch: usize,
    pub resamples: usize,
    pub median_best: f64,
}

/// [`bootstrap_peak`] of `metric` for every group with at least one
/// successful run. Each group draws from its own stream of `rng`.
pub fn bootstrap_table(
    records: &[ExperimentRecord],
    metric: &str,
    group_by: GroupBy,
    batch: usize,
    resamples: usize,
    rng: &Rng,
) -> Result<Vec<BootstrapRow>> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in records {
        if let (true, Some(v)) = (r.status.is_ok(), r.metric(metric)) {
            groups.entry(group_by.key(r)).or_default().push(v);
        }
    }
    groups
        .into_iter()
        .map(|(group, values)| {
            let median_best = bootstrap_peak(&values, batch, resamples, &mut rng.child(&group))?;
            Ok(BootstrapRow {
                group,
                metric: metric.to_string(),
                runs: values.len(),
                batch,
                resamples,
                median_best,
            })
        })
        .collect()
}
