//! Permutation-invariant network over populations of particles:
//! a per-particle embedding, optional equivariant layers, one aggregation
//! and a processing network on the aggregated vector.

mod blob;
mod spec;

pub use spec::{Activation, AggregationSpec, CombineSpec, ModelConfig, OutputHead, DEFAULT_STEPS};

use crate::aggregation::aggregate;
use crate::autodiff::{Graph, Rng, Tensor, Var};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamSet};
use crate::recurrent::{QueryAggregation, RecurrentAggregation};

/// Affine map `x·W + b` with `W` of shape `[in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(params: &mut ParamSet, name: &str, input: usize, output: usize, rng: &mut Rng) -> Result<Self> {
        let weight = params.add_glorot(format!("{name}.weight"), input, output, rng)?;
        let bias = params.add_zeros(format!("{name}.bias"), vec![output])?;
        Ok(Linear {
            weight,
            bias,
            input,
            output,
        })
    }

    pub fn forward(&self, g: &Graph, p: &Bound, x: Var) -> Result<Var> {
        g.add_row(g.matmul(x, p[self.weight])?, p[self.bias])
    }
}

fn activate(g: &Graph, act: Activation, x: Var) -> Var {
    match act {
        Activation::Relu => g.relu(x),
        Activation::Tanh => g.tanh(x),
    }
}

/// Stack of linear layers; every layer is followed by the activation
/// except possibly the last.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
    pub activate_last: bool,
}

impl Mlp {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        input: usize,
        widths: &[usize],
        activation: Activation,
        activate_last: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(widths.len());
        let mut prev = input;
        for (i, &w) in widths.iter().enumerate() {
            layers.push(Linear::new(params, &format!("{name}.{i}"), prev, w, rng)?);
            prev = w;
        }
        Ok(Mlp {
            layers,
            activation,
            activate_last,
        })
    }

    pub fn output_width(&self) -> Option<usize> {
        self.layers.last().map(|l| l.output)
    }

    pub fn forward(&self, g: &Graph, p: &Bound, mut x: Var) -> Result<Var> {
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(g, p, x)?;
            if i < last || self.activate_last {
                x = activate(g, self.activation, x);
            }
        }
        Ok(x)
    }
}

/// A constructed aggregation, with parameters when learnable.
#[derive(Clone, Debug, PartialEq)]
pub enum Aggregation {
    Simple(crate::aggregation::SimpleAggregation),
    Query(QueryAggregation),
    Recurrent(RecurrentAggregation),
}

impl Aggregation {
    pub fn new(params: &mut ParamSet, name: &str, spec: AggregationSpec, width: usize, rng: &mut Rng) -> Result<Self> {
        Ok(match spec {
            AggregationSpec::Simple { reduce } => Aggregation::Simple(reduce),
            AggregationSpec::Query { reduce } => {
                Aggregation::Query(QueryAggregation::new(params, name, width, reduce)?)
            }
            AggregationSpec::Recurrent { reduce, steps, readout } => Aggregation::Recurrent(RecurrentAggregation::new(
                params, name, width, steps, reduce, readout, rng,
            )?),
        })
    }

    /// `[.., n, k] → [.., k]`.
    pub fn forward(&self, g: &Graph, p: &Bound, embeddings: Var) -> Result<Var> {
        match self {
            Aggregation::Simple(a) => aggregate(g, *a, embeddings),
            Aggregation::Query(a) => a.forward(g, p, embeddings),
            Aggregation::Recurrent(a) => a.forward(g, p, embeddings),
        }
    }
}

/// `σ((H − 1·α(H)ᵀ) W + b)`: each particle is centered by the population
/// aggregate before a shared affine map, so the layer is permutation
/// equivariant.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivariantLayer {
    pub linear: Linear,
    pub aggregation: Aggregation,
    pub activation: Activation,
}

impl EquivariantLayer {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        input: usize,
        spec: CombineSpec,
        activation: Activation,
        rng: &mut Rng,
    ) -> Result<Self> {
        let aggregation = Aggregation::new(params, &format!("{name}.agg"), spec.aggregation, input, rng)?;
        let linear = Linear::new(params, name, input, spec.width, rng)?;
        Ok(EquivariantLayer {
            linear,
            aggregation,
            activation,
        })
    }

    pub fn forward(&self, g: &Graph, p: &Bound, h: Var) -> Result<Var> {
        let dims = g.dims(h);
        let n = dims[dims.len() - 2];
        let pooled = self.aggregation.forward(g, p, h)?;
        let centered = g.sub(h, g.broadcast_row(pooled, n)?)?;
        let z = self.linear.forward(g, p, centered)?;
        Ok(activate(g, self.activation, z))
    }
}

/// Deep Set model. Parameters live in one [`ParamSet`] whose order is fixed
/// by the [`ModelConfig`].
#[derive(Clone, Debug, PartialEq)]
pub struct DeepSetModel {
    config: ModelConfig,
    params: ParamSet,
    embed: Mlp,
    combine: Vec<EquivariantLayer>,
    aggregation: Aggregation,
    process: Mlp,
    output: Option<Linear>,
}

impl DeepSetModel {
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let act = config.activation;
        let embed = Mlp::new(&mut params, "embed", config.input_dim, &config.embed, act, true, rng)?;
        let mut width = embed.output_width().unwrap_or(config.input_dim);
        let mut combine = Vec::with_capacity(config.combine.len());
        for (i, spec) in config.combine.iter().enumerate() {
            combine.push(EquivariantLayer::new(
                &mut params,
                &format!("combine.{i}"),
                width,
                *spec,
                act,
                rng,
            )?);
            width = spec.width;
        }
        let aggregation = Aggregation::new(&mut params, "aggregate", config.aggregation, width, rng)?;
        let process = Mlp::new(&mut params, "process", width, &config.process, act, true, rng)?;
        let width = process.output_width().unwrap_or(width);
        let output = match config.head.width() {
            Some(w) => Some(Linear::new(&mut params, "output", width, w, rng)?),
            None => None,
        };
        Ok(DeepSetModel {
            config,
            params,
            embed,
            combine,
            aggregation,
            process,
            output,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn output_width(&self) -> usize {
        match &self.output {
            Some(l) => l.output,
            None => self.process.output_width().unwrap_or(self.config.aggregation_width()),
        }
    }

    fn check_input(&self, g: &Graph, population: Var) -> Result<()> {
        let dims = g.dims(population);
        if dims.len() < 2 || dims[dims.len() - 1] != self.config.input_dim {
            return Err(Error::InvalidConfig(format!(
                "population of shape {} does not have {} features per particle",
                g.shape(population),
                self.config.input_dim
            )));
        }
        if dims[dims.len() - 2] == 0 {
            return Err(Error::EmptyPopulation);
        }
        Ok(())
    }

    /// Per-particle embedding: `[.., n, d] → [.., n, k]`.
    pub fn embed_particles(&self, g: &Graph, p: &Bound, population: Var) -> Result<Var> {
        self.check_input(g, population)?;
        self.embed.forward(g, p, population)
    }

    /// Embedding followed by the equivariant layers.
    pub fn equivariant_features(&self, g: &Graph, p: &Bound, population: Var) -> Result<Var> {
        let mut h = self.embed_particles(g, p, population)?;
        for layer in &self.combine {
            h = layer.forward(g, p, h)?;
        }
        Ok(h)
    }

    /// `[.., n, d] → [.., out]`.
    pub fn forward(&self, g: &Graph, p: &Bound, population: Var) -> Result<Var> {
        let h = self.equivariant_features(g, p, population)?;
        let pooled = self.aggregation.forward(g, p, h)?;
        let mut y = self.process.forward(g, p, pooled)?;
        if let Some(out) = &self.output {
            y = out.forward(g, p, y)?;
        }
        self.head(g, y)
    }

    fn head(&self, g: &Graph, y: Var) -> Result<Var> {
        let axis = g.shape(y).rank() - 1;
        match self.config.head {
            OutputHead::Raw | OutputHead::Linear { .. } => Ok(y),
            OutputHead::Circle => {
                let center = g.slice(y, axis, 0, 2)?;
                let radius = g.softplus(g.slice(y, axis, 2, 3)?);
                g.concat(&[center, radius], axis)
            }
            OutputHead::Beta => Ok(g.softplus(y)),
        }
    }

    /// Inference on a `[n, d]` or `[B, n, d]` tensor.
    pub fn predict(&self, population: &Tensor) -> Result<Tensor> {
        let g = Graph::new();
        let p = self.params.bind_frozen(&g);
        let x = g.constant(population.clone());
        let y = self.forward(&g, &p, x)?;
        Ok(g.value(y))
    }
}
