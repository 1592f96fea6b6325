use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregation::SimpleAggregation;
use crate::autodiff::fnv1a;
use crate::error::{Error, Result};
use crate::model::{AggregationSpec, ModelConfig, OutputHead};
use crate::tasks::{TaskKind, CIRCLE_TRAIN_SIZE, MIXTURE_EVAL_SIZE};

pub const DEFAULT_LR: f64 = 1e-3;
pub const DEFAULT_BATCH: usize = 32;
pub const DEFAULT_WIDTH: usize = 64;
pub const DEFAULT_CLIP: f64 = 10.0;
pub const CIRCLE_STEPS: usize = 20_000;
pub const MIXTURE_STEPS: usize = 30_000;
pub const MIXTURE_SIZE_RANGE: (usize, usize) = (10, 100);

fn default_lr() -> f64 {
    DEFAULT_LR
}
fn default_batch() -> usize {
    DEFAULT_BATCH
}
fn default_width() -> usize {
    DEFAULT_WIDTH
}
fn default_clip() -> f64 {
    DEFAULT_CLIP
}
fn default_log_every() -> usize {
    100
}
fn default_eval() -> usize {
    1000
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Center and softplus radius.
    Circle,
    /// Softplus Beta concentrations.
    Beta,
}

impl HeadKind {
    pub fn output_head(self) -> OutputHead {
        match self {
            HeadKind::Circle => OutputHead::Circle,
            HeadKind::Beta => OutputHead::Beta,
        }
    }
}

/// Everything that determines a training run. Stored as TOML; see
/// `configs/circle.toml` and `configs/mixture.toml`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub task: TaskKind,
    /// Aggregation inside the equivariant layers.
    pub equivariant: AggregationSpec,
    /// Final aggregation.
    pub aggregation: AggregationSpec,
    pub head: HeadKind,
    pub seed: u64,
    pub steps: usize,
    /// Population sizes are drawn per batch with `P(N = n) ∝ n` on `[n_min, n_max]`.
    pub n_min: usize,
    pub n_max: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch: usize,
    /// Width of every hidden layer.
    #[serde(default = "default_width")]
    pub width: usize,
    /// Global gradient-norm clip; `0` disables clipping.
    #[serde(default = "default_clip")]
    pub clip_norm: f64,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    #[serde(default = "default_eval")]
    pub eval_populations: usize,
    /// Held-out population size; defaults to 20 (circle) or 100 (mixture).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_n: Option<usize>,
}

impl TrainConfig {
    pub fn circle(equivariant: AggregationSpec, aggregation: AggregationSpec, seed: u64) -> Self {
        TrainConfig {
            task: TaskKind::Circle,
            equivariant,
            aggregation,
            head: HeadKind::Circle,
            seed,
            steps: CIRCLE_STEPS,
            n_min: CIRCLE_TRAIN_SIZE,
            n_max: CIRCLE_TRAIN_SIZE,
            learning_rate: DEFAULT_LR,
            batch: DEFAULT_BATCH,
            width: DEFAULT_WIDTH,
            clip_norm: DEFAULT_CLIP,
            log_every: default_log_every(),
            eval_populations: default_eval(),
            eval_n: None,
        }
    }

    pub fn mixture(equivariant: AggregationSpec, aggregation: AggregationSpec, seed: u64) -> Self {
        TrainConfig {
            task: TaskKind::Mixture,
            head: HeadKind::Beta,
            steps: MIXTURE_STEPS,
            n_min: MIXTURE_SIZE_RANGE.0,
            n_max: MIXTURE_SIZE_RANGE.1,
            ..Self::circle(equivariant, aggregation, seed)
        }
    }

    /// Default configuration of `task` with simple mean aggregations.
    pub fn for_task(task: TaskKind, seed: u64) -> Self {
        let mean = AggregationSpec::simple(SimpleAggregation::Mean);
        match task {
            TaskKind::Circle => Self::circle(mean, mean, seed),
            TaskKind::Mixture => Self::mixture(mean, mean, seed),
        }
    }

    pub fn eval_size(&self) -> usize {
        self.eval_n.unwrap_or(match self.task {
            TaskKind::Circle => CIRCLE_TRAIN_SIZE,
            TaskKind::Mixture => MIXTURE_EVAL_SIZE,
        })
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig::standard(self.width, self.equivariant, self.aggregation, self.head.output_head())
    }

    /// `task__equiv__final`, shared by all seeds of one configuration.
    pub fn config_id(&self) -> String {
        format!("{}__{}__{}", self.task, self.equivariant, self.aggregation)
    }

    pub fn fingerprint(&self) -> u64 {
        fnv1a(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        let min_n = match self.task {
            TaskKind::Circle => 3,
            TaskKind::Mixture => 2,
        };
        let head_ok = matches!(
            (self.task, self.head),
            (TaskKind::Circle, HeadKind::Circle) | (TaskKind::Mixture, HeadKind::Beta)
        );
        let problem = if self.n_min < min_n {
            Some(format!("{} task needs n_min ≥ {min_n}", self.task))
        } else if self.n_min > self.n_max {
            return Err(Error::InvalidRange {
                min: self.n_min,
                max: self.n_max,
            });
        } else if self.steps == 0 || self.batch == 0 || self.width == 0 {
            Some("steps, batch and width must be positive".into())
        } else if self.log_every == 0 || self.eval_populations == 0 {
            Some("log_every and eval_populations must be positive".into())
        } else if !head_ok {
            Some(format!("{:?} head does not fit the {} task", self.head, self.task))
        } else if !(self.learning_rate >= 0.0) || !(self.clip_norm >= 0.0) {
            Some("learning_rate and clip_norm must be non-negative".into())
        } else if self.eval_size() < min_n {
            Some(format!("eval_n must be at least {min_n}"))
        } else {
            None
        };
        match problem {
            Some(p) => Err(Error::InvalidConfig(p)),
            None => Ok(()),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}
