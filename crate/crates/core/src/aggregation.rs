//! Non-learnable aggregations over the particle axis.
//!
//! Populations are `[n × k]`, or `[b × n × k]` for a batch of equally sized
//! populations; every function here reduces the second-to-last axis.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SimpleAggregation {
    Sum,
    Mean,
    Max,
    LogSumExp,
    /// Lower nearest-rank percentile, `p ∈ [0, 1]`.
    Percentile(f64),
}

impl SimpleAggregation {
    /// The three reducers used by the experiment grids.
    pub const GRID: [SimpleAggregation; 3] = [
        SimpleAggregation::Mean,
        SimpleAggregation::Max,
        SimpleAggregation::LogSumExp,
    ];
}

impl fmt::Display for SimpleAggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimpleAggregation::Sum => write!(f, "sum"),
            SimpleAggregation::Mean => write!(f, "mean"),
            SimpleAggregation::Max => write!(f, "max"),
            SimpleAggregation::LogSumExp => write!(f, "lse"),
            SimpleAggregation::Percentile(p) => write!(f, "percentile:{p}"),
        }
    }
}

impl FromStr for SimpleAggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(SimpleAggregation::Sum),
            "mean" => Ok(SimpleAggregation::Mean),
            "max" => Ok(SimpleAggregation::Max),
            "lse" | "logsumexp" => Ok(SimpleAggregation::LogSumExp),
            "median" => Ok(SimpleAggregation::Percentile(0.5)),
            _ => {
                let p = s
                    .strip_prefix("percentile:")
                    .and_then(|p| p.parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown aggregation `{s}`")))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidConfig(format!("percentile {p} outside [0, 1]")));
                }
                Ok(SimpleAggregation::Percentile(p))
            }
        }
    }
}

impl TryFrom<String> for SimpleAggregation {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SimpleAggregation> for String {
    fn from(a: SimpleAggregation) -> String {
        a.to_string()
    }
}

/// Index of the particle axis, rejecting empty populations.
pub(crate) fn particle_axis(g: &Graph, embeddings: Var) -> Result<usize> {
    let dims = g.dims(embeddings);
    if dims.len() < 2 {
        return Err(Error::ShapeMismatch {
            op: "aggregate",
            lhs: g.shape(embeddings),
            rhs: crate::autodiff::Shape::new(vec![0, 0])?,
        });
    }
    let axis = dims.len() - 2;
    if dims[axis] == 0 {
        return Err(Error::EmptyPopulation);
    }
    Ok(axis)
}

/// `[.., n, k] → [.., k]`.
pub fn aggregate(g: &Graph, agg: SimpleAggregation, embeddings: Var) -> Result<Var> {
    let axis = particle_axis(g, embeddings)?;
    match agg {
        SimpleAggregation::Sum => g.reduce_sum(embeddings, axis),
        SimpleAggregation::Mean => g.reduce_mean(embeddings, axis),
        SimpleAggregation::Max => g.reduce_max(embeddings, axis),
        SimpleAggregation::LogSumExp => g.logsumexp(embeddings, axis),
        SimpleAggregation::Percentile(p) => g.sort_select(embeddings, axis, p),
    }
}

/// Applies `agg` to the rows `aᵢ · eᵢ`; `weights` is `[.., n]`.
pub fn aggregate_weighted(g: &Graph, agg: SimpleAggregation, weights: Var, embeddings: Var) -> Result<Var> {
    particle_axis(g, embeddings)?;
    let dims = g.dims(embeddings);
    let wdims = g.dims(weights);
    if wdims[..] != dims[..dims.len() - 1] {
        return Err(Error::ShapeMismatch {
            op: "aggregate_weighted",
            lhs: g.shape(weights),
            rhs: g.shape(embeddings),
        });
    }
    if g.with_value(weights, |w| w.data().iter().any(|&v| !(v >= 0.0))) {
        return Err(Error::InvalidWeights);
    }
    aggregate(g, agg, g.scale_rows(embeddings, weights)?)
}

/// Elementwise invertible map `g` turning a plain sum into `g ∘ Σ ∘ g⁻¹`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SumIsomorphism {
    Identity,
    /// `g = ln`, `g⁻¹ = exp`; yields log-sum-exp.
    Log,
    /// `g⁻¹(x) = (x, 1)`, `g(x, c) = x / c`; yields the mean.
    Count,
}

impl SumIsomorphism {
    /// Inverse map applied to each particle.
    pub fn inverse(self, g: &Graph, x: Var) -> Result<Var> {
        match self {
            SumIsomorphism::Identity => Ok(x),
            SumIsomorphism::Log => {
                let y = g.exp(x);
                if g.with_value(y, |t| t.data().iter().any(|v| !v.is_finite())) {
                    return Err(Error::IsomorphismDomain("exp overflow".into()));
                }
                Ok(y)
            }
            SumIsomorphism::Count => {
                let mut dims = g.dims(x);
                *dims.last_mut().unwrap() = 1;
                let ones = g.constant(Tensor::new(dims.clone(), vec![1.0; dims.iter().product()])?);
                g.concat(&[x, ones], dims.len() - 1)
            }
        }
    }

    /// Forward map applied to the summed value.
    pub fn forward(self, g: &Graph, s: Var) -> Result<Var> {
        match self {
            SumIsomorphism::Identity => Ok(s),
            SumIsomorphism::Log => {
                if g.with_value(s, |t| t.data().iter().any(|&v| !(v > 0.0) || !v.is_finite())) {
                    return Err(Error::IsomorphismDomain("ln of a non-positive sum".into()));
                }
                Ok(g.log(s))
            }
            SumIsomorphism::Count => {
                let dims = g.dims(s);
                let axis = dims.len() - 1;
                let width = dims[axis];
                if width < 1 {
                    return Err(Error::IsomorphismDomain("missing count column".into()));
                }
                let count = g.slice(s, axis, width - 1, width)?;
                if g.with_value(count, |t| t.data().contains(&0.0)) {
                    return Err(Error::IsomorphismDomain("zero count".into()));
                }
                let head = g.slice(s, axis, 0, width - 1)?;
                let count = g.broadcast_col(g.reshape(count, &dims[..axis])?, width - 1)?;
                g.div(head, count)
            }
        }
    }
}

/// `g(Σᵢ g⁻¹(eᵢ))`.
pub fn aggregate_isomorphic(g: &Graph, iso: SumIsomorphism, embeddings: Var) -> Result<Var> {
    let axis = particle_axis(g, embeddings)?;
    let lifted = iso.inverse(g, embeddings)?;
    let summed = g.reduce_sum(lifted, axis)?;
    iso.forward(g, summed)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub scale: f64,
    /// `‖LΣE(s·x) − max(s·x)‖∞`
    pub gap_to_max: f64,
    /// `‖LΣE(s·x) − (ln n + s·mean(x))‖∞`
    pub gap_to_linear: f64,
}

/// How log-sum-exp moves between max-like and linear behavior as the input
/// range `s` shrinks.
pub fn interpolation_profile(rows: &Tensor, scales: &[f64]) -> Result<Vec<ProfileRow>> {
    let dims = rows.dims();
    if dims.len() != 2 || dims[0] < 2 {
        return Err(Error::InvalidConfig(format!(
            "interpolation profile needs [n × k] with n ≥ 2, got {}",
            rows.shape()
        )));
    }
    let ln_n = (dims[0] as f64).ln();
    scales
        .iter()
        .map(|&s| {
            let g = Graph::new();
            let x = g.constant(rows.clone());
            let sx = g.scale(x, s);
            let lse = g.value(aggregate(&g, SimpleAggregation::LogSumExp, sx)?);
            let max = g.value(aggregate(&g, SimpleAggregation::Max, sx)?);
            let mean = g.value(aggregate(&g, SimpleAggregation::Mean, sx)?);
            let mut gap_to_max: f64 = 0.0;
            let mut gap_to_linear: f64 = 0.0;
            for ((l, m), a) in lse.data().iter().zip(max.data()).zip(mean.data()) {
                gap_to_max = gap_to_max.max((l - m).abs());
                gap_to_linear = gap_to_linear.max((l - (ln_n + a)).abs());
            }
            Ok(ProfileRow {
                scale: s,
                gap_to_max,
                gap_to_linear,
            })
        })
        .collect()
}
