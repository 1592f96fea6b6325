use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aggregation::SimpleAggregation;
use crate::error::{Error, Result};
use crate::recurrent::Readout;

pub const DEFAULT_STEPS: usize = 3;

/// Which aggregation a layer uses. Compact labels: `mean`, `q-mean`
/// (single learned query), `r-mean` (recurrent, 3 steps), `r5-mean`.
/// Serializes as a tagged tree; deserializes from either the tree or a label.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", try_from = "SpecRepr")]
pub enum AggregationSpec {
    Simple {
        reduce: SimpleAggregation,
    },
    Query {
        reduce: SimpleAggregation,
    },
    Recurrent {
        reduce: SimpleAggregation,
        steps: usize,
        #[serde(default)]
        readout: Readout,
    },
}

fn default_steps() -> usize {
    DEFAULT_STEPS
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum SpecTree {
    Simple {
        reduce: SimpleAggregation,
    },
    Query {
        reduce: SimpleAggregation,
    },
    Recurrent {
        reduce: SimpleAggregation,
        #[serde(default = "default_steps")]
        steps: usize,
        #[serde(default)]
        readout: Readout,
    },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SpecRepr {
    Label(String),
    Tree(SpecTree),
}

impl TryFrom<SpecRepr> for AggregationSpec {
    type Error = Error;

    fn try_from(repr: SpecRepr) -> Result<Self> {
        let spec = match repr {
            SpecRepr::Label(s) => s.parse()?,
            SpecRepr::Tree(SpecTree::Simple { reduce }) => AggregationSpec::Simple { reduce },
            SpecRepr::Tree(SpecTree::Query { reduce }) => AggregationSpec::Query { reduce },
            SpecRepr::Tree(SpecTree::Recurrent { reduce, steps, readout }) => {
                if steps == 0 {
                    return Err(Error::InvalidConfig("recurrent aggregation needs T ≥ 1".into()));
                }
                AggregationSpec::Recurrent { reduce, steps, readout }
            }
        };
        Ok(spec)
    }
}

impl AggregationSpec {
    pub fn simple(reduce: SimpleAggregation) -> Self {
        AggregationSpec::Simple { reduce }
    }

    pub fn query(reduce: SimpleAggregation) -> Self {
        AggregationSpec::Query { reduce }
    }

    pub fn recurrent(reduce: SimpleAggregation) -> Self {
        AggregationSpec::Recurrent {
            reduce,
            steps: DEFAULT_STEPS,
            readout: Readout::Reverse,
        }
    }

    pub fn reduce(&self) -> SimpleAggregation {
        match *self {
            AggregationSpec::Simple { reduce }
            | AggregationSpec::Query { reduce }
            | AggregationSpec::Recurrent { reduce, .. } => reduce,
        }
    }

    pub fn is_learnable(&self) -> bool {
        !matches!(self, AggregationSpec::Simple { .. })
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self, AggregationSpec::Recurrent { .. })
    }

    /// `{simple, query, recurrent} × {mean, max, lse}`.
    pub fn grid() -> Vec<AggregationSpec> {
        let mut out = Vec::new();
        for wrap in [Self::simple, Self::query, Self::recurrent] {
            for reduce in SimpleAggregation::GRID {
                out.push(wrap(reduce));
            }
        }
        out
    }
}

impl fmt::Display for AggregationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AggregationSpec::Simple { reduce } => write!(f, "{reduce}"),
            AggregationSpec::Query { reduce } => write!(f, "q-{reduce}"),
            AggregationSpec::Recurrent { reduce, steps, readout } => {
                if *steps == DEFAULT_STEPS {
                    write!(f, "r-{reduce}")?;
                } else {
                    write!(f, "r{steps}-{reduce}")?;
                }
                match readout {
                    Readout::Reverse => Ok(()),
                    Readout::First => write!(f, "/first"),
                    Readout::Last => write!(f, "/last"),
                }
            }
        }
    }
}

impl FromStr for AggregationSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("q-") {
            return Ok(AggregationSpec::query(rest.parse()?));
        }
        if let Some(rest) = s.strip_prefix('r') {
            if let Some((steps, rest)) = rest.split_once('-') {
                let steps = if steps.is_empty() {
                    DEFAULT_STEPS
                } else {
                    steps
                        .parse()
                        .map_err(|_| Error::InvalidConfig(format!("bad step count in `{s}`")))?
                };
                if steps == 0 {
                    return Err(Error::InvalidConfig("recurrent aggregation needs T ≥ 1".into()));
                }
                let (reduce, readout) = match rest.split_once('/') {
                    Some((r, "first")) => (r, Readout::First),
                    Some((r, "last")) => (r, Readout::Last),
                    Some(_) => return Err(Error::InvalidConfig(format!("bad readout in `{s}`"))),
                    None => (rest, Readout::Reverse),
                };
                return Ok(AggregationSpec::Recurrent {
                    reduce: reduce.parse()?,
                    steps,
                    readout,
                });
            }
        }
        Ok(AggregationSpec::simple(s.parse()?))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

/// Final mapping after the process network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OutputHead {
    /// No output layer: the process network's last width is the output.
    Raw,
    Linear {
        width: usize,
    },
    /// `(center x, center y, radius)` with the radius through softplus.
    Circle,
    /// Beta concentrations `(a, b)` through softplus.
    Beta,
}

impl OutputHead {
    pub fn width(&self) -> Option<usize> {
        match self {
            OutputHead::Raw => None,
            OutputHead::Linear { width } => Some(*width),
            OutputHead::Circle => Some(3),
            OutputHead::Beta => Some(2),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombineSpec {
    pub width: usize,
    pub aggregation: AggregationSpec,
}

/// Architecture of a [`super::DeepSetModel`]; widths chain
/// `input → embed… → combine… → aggregation → process… → head`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    /// Hidden widths of the per-particle network, each followed by the activation.
    pub embed: Vec<usize>,
    /// Equivariant layers.
    pub combine: Vec<CombineSpec>,
    pub aggregation: AggregationSpec,
    /// Hidden widths of the process network, each followed by the activation.
    pub process: Vec<usize>,
    pub head: OutputHead,
    #[serde(default)]
    pub activation: Activation,
}

impl ModelConfig {
    /// 2→w→w embedding, two w-wide equivariant layers, w→w processing;
    /// experiments use `w = 64`.
    pub fn standard(
        width: usize,
        equivariant: AggregationSpec,
        aggregation: AggregationSpec,
        head: OutputHead,
    ) -> Self {
        ModelConfig {
            input_dim: 2,
            embed: vec![width, width],
            combine: vec![
                CombineSpec {
                    width,
                    aggregation: equivariant,
                },
                CombineSpec {
                    width,
                    aggregation: equivariant,
                },
            ],
            aggregation,
            process: vec![width],
            head,
            activation: Activation::Relu,
        }
    }

    /// Width of the aggregated vector.
    pub fn aggregation_width(&self) -> usize {
        self.combine
            .last()
            .map(|c| c.width)
            .or_else(|| self.embed.last().copied())
            .unwrap_or(self.input_dim)
    }

    pub fn validate(&self) -> Result<()> {
        let zero = self.input_dim == 0
            || self.embed.contains(&0)
            || self.process.contains(&0)
            || self.combine.iter().any(|c| c.width == 0)
            || self.head.width() == Some(0);
        if zero {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        let steps_ok = self
            .combine
            .iter()
            .map(|c| &c.aggregation)
            .chain(std::iter::once(&self.aggregation))
            .all(|a| !matches!(a, AggregationSpec::Recurrent { steps: 0, .. }));
        if !steps_ok {
            return Err(Error::InvalidConfig("recurrent aggregation needs T ≥ 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        let specs = [
            "mean",
            "max",
            "lse",
            "q-max",
            "r-lse",
            "r5-sum",
            "r1-mean/first",
            "r-max/last",
        ];
        for s in specs {
            let spec: AggregationSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("r0-mean".parse::<AggregationSpec>().is_err());
        assert!("q-avg".parse::<AggregationSpec>().is_err());
        assert_eq!(AggregationSpec::grid().len(), 9);
    }

    #[test]
    fn config_serializes_as_a_tree() {
        let cfg = ModelConfig::standard(
            64,
            AggregationSpec::recurrent(SimpleAggregation::Max),
            AggregationSpec::query(SimpleAggregation::LogSumExp),
            OutputHead::Circle,
        );
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains(r#""type":"recurrent""#));
        let back: ModelConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        let toml_text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<ModelConfig>(&toml_text).unwrap(), cfg);
    }

    #[derive(Deserialize)]
    struct Holder {
        a: AggregationSpec,
        b: AggregationSpec,
    }

    #[test]
    fn spec_accepts_labels_and_trees() {
        let h: Holder = toml::from_str(
            r#"
            a = "r5-lse"
            b = { type = "recurrent", reduce = "max" }
            "#,
        )
        .unwrap();
        assert_eq!(h.a, "r5-lse".parse().unwrap());
        assert_eq!(h.b, AggregationSpec::recurrent(SimpleAggregation::Max));
        assert!(toml::from_str::<Holder>(
            r#"a = "mean"
b = { type = "recurrent", reduce = "max", steps = 0 }"#
        )
        .is_err());
    }
}
