use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::training::TrainConfig;

/// Names allowed as keys of [`ExperimentRecord::metrics`].
pub mod metric {
    /// Held-out total MSE (`center_mse + radius_mse`) of one run.
    pub const BEST_MSE: &str = "best_mse";
    pub const CENTER_MSE: &str = "center_mse";
    pub const RADIUS_MSE: &str = "radius_mse";
    /// Held-out MSE of predicting the mean training circle.
    pub const BASELINE_MSE: &str = "baseline_mse";
    pub const BETA_NLL: &str = "beta_nll";
    /// Mean `|E[Beta] − w|` on held-out populations.
    pub const MEAN_ABS_ERROR: &str = "mean_abs_error";
    pub const EM_LOG_RATIO: &str = "em_log_ratio";
    pub const FINAL_LOSS: &str = "final_loss";

    pub const REGISTRY: &[&str] = &[
        BEST_MSE,
        CENTER_MSE,
        RADIUS_MSE,
        BASELINE_MSE,
        BETA_NLL,
        MEAN_ABS_ERROR,
        EM_LOG_RATIO,
        FINAL_LOSS,
    ];
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    NonFiniteLoss { step: usize },
    Failed { message: String },
}

impl Status {
    pub fn is_ok(&self) -> bool {
        matches!(self, Status::Ok)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Ok => f.write_str("ok"),
            Status::NonFiniteLoss { step } => write!(f, "non_finite_loss@{step}"),
            Status::Failed { message } => write!(f, "failed:{message}"),
        }
    }
}

impl FromStr for Status {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "ok" {
            return Ok(Status::Ok);
        }
        if let Some(step) = s.strip_prefix("non_finite_loss@") {
            let step = step
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad status `{s}`")))?;
            return Ok(Status::NonFiniteLoss { step });
        }
        if let Some(message) = s.strip_prefix("failed:") {
            return Ok(Status::Failed {
                message: message.to_string(),
            });
        }
        Err(Error::InvalidConfig(format!("bad status `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    /// Mean training loss over the interval ending at `step`.
    pub loss: f64,
}

/// Outcome of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub run_id: String,
    pub config_id: String,
    pub fingerprint: u64,
    pub seed: u64,
    pub agg_equiv: String,
    pub agg_final: String,
    pub status: Status,
    pub steps: usize,
    /// Wall-clock seconds; zero unless timing was requested, so that
    /// records are reproducible bit for bit.
    pub seconds: f64,
    pub losses: Vec<LossPoint>,
    pub metrics: BTreeMap<String, f64>,
    /// Embedding width and largest population seen, among other facts
    /// about the run that are not metrics.
    pub notes: BTreeMap<String, String>,
    pub config: TrainConfig,
}

impl ExperimentRecord {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn set_metric(&mut self, name: &str, value: f64) {
        debug_assert!(metric::REGISTRY.contains(&name), "unregistered metric {name}");
        self.metrics.insert(name.to_string(), value);
    }
}
