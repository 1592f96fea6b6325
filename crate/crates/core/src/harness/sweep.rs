use serde::{Deserialize, Serialize};

use super::stats::Percentiles;
use crate::autodiff::{Rng, Tensor};
use crate::error::{Error, Result};
use crate::model::DeepSetModel;
use crate::tasks::dataset::Target;
use crate::tasks::{points_of, welzl_min_circle, BetaParams, Circle, CircleGmm, Gmm2, TaskKind};

/// Size of the population that sweeps subsample from.
pub const MOTHER_SIZE: usize = 1000;
pub const SWEEP_SIZES: [usize; 7] = [10, 20, 50, 100, 200, 500, 1000];

/// Particles per forward pass when predicting many subsamples.
const PARTICLE_BUDGET: usize = 20_000;

/// A fixed population and its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Mother {
    pub population: Tensor,
    /// The generating weight for mixtures; the minimal circle of the whole
    /// population for circles.
    pub target: Target,
}

impl Mother {
    pub fn sample(task: TaskKind, rng: &mut Rng, size: usize) -> Result<Mother> {
        match task {
            TaskKind::Circle => {
                let gmm = CircleGmm::sample(rng);
                let points = gmm.draw(rng, size);
                let circle = welzl_min_circle(&points)?;
                let data = points.iter().flatten().copied().collect();
                Ok(Mother {
                    population: Tensor::new(vec![size, 2], data)?,
                    target: Target::Circle(circle),
                })
            }
            TaskKind::Mixture => {
                let gmm = Gmm2::sample(rng);
                let (population, _) = gmm.draw(rng, size)?;
                Ok(Mother {
                    population,
                    target: Target::Mixture(gmm.weight_small()),
                })
            }
        }
    }

    pub fn task(&self) -> TaskKind {
        match self.target {
            Target::Circle(_) => TaskKind::Circle,
            Target::Mixture(_) => TaskKind::Mixture,
        }
    }
}

/// `n` rows of `population` drawn with replacement.
pub fn subsample(population: &Tensor, n: usize, rng: &mut Rng) -> Result<Tensor> {
    let dims = population.dims();
    if dims.len() != 2 || dims[0] == 0 {
        return Err(Error::EmptyPopulation);
    }
    let d = dims[1];
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let i = rng.below(dims[0]);
        data.extend_from_slice(&population.data()[i * d..(i + 1) * d]);
    }
    Tensor::new(vec![n, d], data)
}

/// Model outputs for equally sized populations, one row per population.
pub fn predict_all(model: &DeepSetModel, populations: &[Tensor]) -> Result<Vec<Vec<f64>>> {
    let Some(first) = populations.first() else {
        return Ok(Vec::new());
    };
    let dims = first.dims().to_vec();
    let chunk = (PARTICLE_BUDGET / dims[0].max(1)).max(1);
    let mut out = Vec::with_capacity(populations.len());
    for group in populations.chunks(chunk) {
        let mut data = Vec::with_capacity(group.len() * first.numel());
        for p in group {
            if p.dims() != &dims[..] {
                return Err(Error::ShapeMismatch {
                    op: "predict_all",
                    lhs: first.shape().clone(),
                    rhs: p.shape().clone(),
                });
            }
            data.extend_from_slice(p.data());
        }
        let x = Tensor::new(vec![group.len(), dims[0], dims[1]], data)?;
        let y = model.predict(&x)?;
        let width = y.dims()[1];
        out.extend(y.data().chunks(width).map(<[f64]>::to_vec));
    }
    Ok(out)
}

/// Beta mean of the predicted concentrations.
pub fn mixture_estimate(output: &[f64]) -> Result<f64> {
    Ok(BetaParams::new(output[0], output[1])?.mean())
}

/// Quantiles at one population size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub n: usize,
    /// Mixture: the Beta-mean weight. Circle: the predicted radius.
    pub estimate: Percentiles,
    /// Mixture: `|ŵ − w|` against the generating weight. Circle: squared
    /// error of the predicted circle against the subsample's minimal circle.
    pub error: Percentiles,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub task: TaskKind,
    pub target: Target,
    pub resamples: usize,
    pub sizes: Vec<usize>,
    pub summaries: Vec<SizeSummary>,
}

impl SweepResult {
    pub fn new(task: TaskKind, target: Target, resamples: usize, summaries: Vec<SizeSummary>) -> Result<Self> {
        let sizes: Vec<usize> = summaries.iter().map(|s| s.n).collect();
        if sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(format!(
                "sweep sizes must increase strictly: {sizes:?}"
            )));
        }
        Ok(SweepResult {
            task,
            target,
            resamples,
            sizes,
            summaries,
        })
    }

    /// Pairs of neighbouring sizes where the 90% interval got wider.
    pub fn width_inversions(&self) -> usize {
        self.summaries
            .windows(2)
            .filter(|w| w[1].estimate.width90() > w[0].estimate.width90())
            .count()
    }
}

/// Sweeps a mother population of [`MOTHER_SIZE`] drawn from `rng`.
pub fn population_sweep(
    model: &DeepSetModel,
    task: TaskKind,
    sizes: &[usize],
    resamples: usize,
    rng: &Rng,
) -> Result<SweepResult> {
    let mother = Mother::sample(task, &mut rng.child("mother"), MOTHER_SIZE)?;
    sweep_population(model, &mother, sizes, resamples, rng)
}

/// For each size `n`, predicts on `resamples` subsamples of `mother` and
/// summarizes the estimates. Sizes are sorted and deduplicated.
pub fn sweep_population(
    model: &DeepSetModel,
    mother: &Mother,
    sizes: &[usize],
    resamples: usize,
    rng: &Rng,
) -> Result<SweepResult> {
    if resamples == 0 {
        return Err(Error::InvalidConfig("resamples must be positive".into()));
    }
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    let mut summaries = Vec::with_capacity(sizes.len());
    for &n in &sizes {
        let mut r = rng.child_indexed("subsample", n as u64);
        let subs = (0..resamples)
            .map(|_| subsample(&mother.population, n, &mut r))
            .collect::<Result<Vec<_>>>()?;
        let outputs = predict_all(model, &subs)?;
        let mut estimates = Vec::with_capacity(resamples);
        let mut errors = Vec::with_capacity(resamples);
        for (sub, out) in subs.iter().zip(&outputs) {
            match mother.target {
                Target::Mixture(w) => {
                    let est = mixture_estimate(out)?;
                    estimates.push(est);
                    errors.push((est - w).abs());
                }
                Target::Circle(_) => {
                    let truth = welzl_min_circle(&points_of(sub)?)?;
                    let pred = Circle::new([out[0], out[1]], out[2]);
                    estimates.push(pred.radius);
                    errors.push(squared_error(&pred, &truth));
                }
            }
        }
        summaries.push(SizeSummary {
            n,
            estimate: Percentiles::of(&estimates)?,
            error: Percentiles::of(&errors)?,
        });
    }
    SweepResult::new(mother.task(), mother.target, resamples, summaries)
}

fn squared_error(a: &Circle, b: &Circle) -> f64 {
    a.to_vec().iter().zip(b.to_vec()).map(|(x, y)| (x - y).powi(2)).sum()
}
