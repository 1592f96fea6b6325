//! Learnable aggregations: attention with a learned query, optionally
//! refined over several steps by a gated recurrent cell, with the per-step
//! responses post-processed in reverse order.
//!
//! ```text
//! q₁          learned, initialized to zero
//! q_t       = cell(q_{t−1}, r_{t−1})            t = 2..T
//! â_{i,t}   = e_iᵀ q_t
//! a_t       = softmax(â_t)
//! r_t       = reduce({a_{i,t} e_i})
//! r         = readout(r_T, …, r_1)
//! ```

use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate_weighted, particle_axis, SimpleAggregation};
use crate::autodiff::{Graph, Rng, Tensor, Var};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamSet};

/// Long short-term memory cell with gate order (input, forget, candidate,
/// output) and forget-gate bias initialized to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCell {
    input: usize,
    hidden: usize,
    weight: ParamId,
    bias: ParamId,
}

impl LstmCell {
    pub fn new(params: &mut ParamSet, name: &str, input: usize, hidden: usize, rng: &mut Rng) -> Result<Self> {
        let weight = params.add_glorot(format!("{name}.weight"), input + hidden, 4 * hidden, rng)?;
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].fill(1.0);
        let bias = params.add(format!("{name}.bias"), Tensor::vector(b));
        Ok(LstmCell {
            input,
            hidden,
            weight,
            bias,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// One step; `x` is `[.., input]`, `h` and `c` are `[.., hidden]`.
    pub fn step(&self, g: &Graph, p: &Bound, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let axis = g.shape(x).rank() - 1;
        let xh = g.concat(&[x, h], axis)?;
        let z = g.add_row(g.matmul(xh, p[self.weight])?, p[self.bias])?;
        let k = self.hidden;
        let input = g.sigmoid(g.slice(z, axis, 0, k)?);
        let forget = g.sigmoid(g.slice(z, axis, k, 2 * k)?);
        let cand = g.tanh(g.slice(z, axis, 2 * k, 3 * k)?);
        let output = g.sigmoid(g.slice(z, axis, 3 * k, 4 * k)?);
        let c = g.add(g.mul(forget, c)?, g.mul(input, cand)?)?;
        let h = g.mul(output, g.tanh(c))?;
        Ok((h, c))
    }

    pub fn input(&self) -> usize {
        self.input
    }
}

/// `â_i = e_iᵀ q`: `[.., n, k] × [.., k] → [.., n]`.
pub fn attention_logits(g: &Graph, embeddings: Var, query: Var) -> Result<Var> {
    particle_axis(g, embeddings)?;
    g.row_dot(embeddings, query)
}

/// Softmax over the particle axis of `[.., n]` logits.
pub fn normalize(g: &Graph, logits: Var) -> Result<Var> {
    let rank = g.shape(logits).rank();
    if rank == 0 {
        return Err(Error::EmptyPopulation);
    }
    if g.dims(logits)[rank - 1] == 0 {
        return Err(Error::EmptyPopulation);
    }
    g.softmax(logits, rank - 1)
}

/// Broadcasts a `[k]` parameter to the batch layout of `embeddings`.
fn batched(g: &Graph, v: Var, embeddings: Var) -> Result<Var> {
    let dims = g.dims(embeddings);
    if dims.len() == 3 {
        g.expand(v, 0, dims[0])
    } else {
        Ok(v)
    }
}

fn zeros_like_query(g: &Graph, embeddings: Var) -> Result<Var> {
    let dims = g.dims(embeddings);
    let mut qd = dims[..dims.len() - 2].to_vec();
    qd.push(dims[dims.len() - 1]);
    Ok(g.constant(Tensor::zeros(qd)?))
}

fn respond(g: &Graph, base: SimpleAggregation, embeddings: Var, query: Var) -> Result<Var> {
    let weights = normalize(g, attention_logits(g, embeddings, query)?)?;
    aggregate_weighted(g, base, weights, embeddings)
}

/// Single learned query (the `T = 1` case).
#[derive(Clone, Debug, PartialEq)]
pub struct QueryAggregation {
    pub(crate) query: ParamId,
    pub(crate) width: usize,
    pub(crate) base: SimpleAggregation,
}

impl QueryAggregation {
    pub fn new(params: &mut ParamSet, name: &str, width: usize, base: SimpleAggregation) -> Result<Self> {
        let query = params.add_zeros(format!("{name}.query"), vec![width])?;
        Ok(QueryAggregation { query, width, base })
    }

    pub fn query(&self) -> ParamId {
        self.query
    }

    pub fn forward(&self, g: &Graph, p: &Bound, embeddings: Var) -> Result<Var> {
        let q = batched(g, p[self.query], embeddings)?;
        respond(g, self.base, embeddings, q)
    }
}

/// How the per-step responses `r_1..r_T` become the output.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// A second cell consumes `r_T, …, r_1`; its final hidden state is the output.
    #[default]
    Reverse,
    /// Output `r_1`, the last response the reverse pass would consume.
    First,
    /// Output `r_T`, as in a forward-only read-process-write block.
    Last,
}

#[derive(Clone, Debug, PartialEq)]
enum ReadoutCell {
    Reverse(LstmCell),
    First,
    Last,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentAggregation {
    pub(crate) query: ParamId,
    pub(crate) width: usize,
    pub(crate) steps: usize,
    pub(crate) base: SimpleAggregation,
    query_cell: LstmCell,
    readout: ReadoutCell,
}

/// Intermediate values of one recurrent aggregation.
#[derive(Clone, Debug)]
pub struct RecurrentTrace {
    pub queries: Vec<Var>,
    pub responses: Vec<Var>,
    pub output: Var,
}

impl RecurrentAggregation {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        width: usize,
        steps: usize,
        base: SimpleAggregation,
        readout: Readout,
        rng: &mut Rng,
    ) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidConfig("recurrent aggregation needs T ≥ 1".into()));
        }
        let query = params.add_zeros(format!("{name}.query"), vec![width])?;
        let query_cell = LstmCell::new(params, &format!("{name}.query_cell"), width, width, rng)?;
        let readout = match readout {
            Readout::Reverse => ReadoutCell::Reverse(LstmCell::new(
                params,
                &format!("{name}.readout_cell"),
                width,
                width,
                rng,
            )?),
            Readout::First => ReadoutCell::First,
            Readout::Last => ReadoutCell::Last,
        };
        Ok(RecurrentAggregation {
            query,
            width,
            steps,
            base,
            query_cell,
            readout,
        })
    }

    pub fn query(&self) -> ParamId {
        self.query
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn forward(&self, g: &Graph, p: &Bound, embeddings: Var) -> Result<Var> {
        Ok(self.trace(g, p, embeddings)?.output)
    }

    pub fn trace(&self, g: &Graph, p: &Bound, embeddings: Var) -> Result<RecurrentTrace> {
        particle_axis(g, embeddings)?;
        let mut q = batched(g, p[self.query], embeddings)?;
        let mut memory = zeros_like_query(g, embeddings)?;
        let mut queries = Vec::with_capacity(self.steps);
        let mut responses: Vec<Var> = Vec::with_capacity(self.steps);
        for t in 0..self.steps {
            if t > 0 {
                let (h, c) = self.query_cell.step(g, p, responses[t - 1], q, memory)?;
                q = h;
                memory = c;
            }
            queries.push(q);
            responses.push(respond(g, self.base, embeddings, q)?);
        }
        let output = match &self.readout {
            ReadoutCell::Reverse(cell) => {
                let mut h = zeros_like_query(g, embeddings)?;
                let mut c = h;
                for &r in responses.iter().rev() {
                    (h, c) = cell.step(g, p, r, h, c)?;
                }
                h
            }
            ReadoutCell::First => responses[0],
            ReadoutCell::Last => responses[self.steps - 1],
        };
        Ok(RecurrentTrace {
            queries,
            responses,
            output,
        })
    }
}
