//! Synthetic tasks with exact or classical reference solutions.

mod circle;
pub mod dataset;
mod mixture;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use circle::{
    brute_force_min_circle, points_of, sample_circle_task, welzl_min_circle, Circle, CircleGmm, BRUTE_FORCE_MAX,
    CIRCLE_TRAIN_SIZE,
};
pub use mixture::{
    beta_log_likelihood, em_fit, em_fit_weights, kde_log_score, sample_gmm_task, BetaParams, EmFit, Gmm2, Kde,
    EM_MAX_ITERS, EM_RESTARTS, EM_TOL, MIXTURE_EVAL_SIZE, MIXTURE_SIGMA, WEIGHT_RANGE,
};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Circle,
    Mixture,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Circle => "circle",
            TaskKind::Mixture => "mixture",
        })
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circle" => Ok(TaskKind::Circle),
            "mixture" => Ok(TaskKind::Mixture),
            other => Err(Error::InvalidConfig(format!("unknown task `{other}`"))),
        }
    }
}
