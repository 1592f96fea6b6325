//! Training loop on freshly generated data.

mod adam;
mod config;
mod loss;

use std::collections::BTreeMap;
use std::time::Instant;

pub use adam::Adam;
pub use config::{
    HeadKind, TrainConfig, CIRCLE_STEPS, DEFAULT_BATCH, DEFAULT_CLIP, DEFAULT_LR, DEFAULT_WIDTH, MIXTURE_SIZE_RANGE,
    MIXTURE_STEPS,
};
pub use loss::{circle_loss, mixture_loss, sample_population_size};

use crate::autodiff::{Graph, Rng, Tensor};
use crate::error::{Error, Result};
use crate::harness::{metric, ExperimentRecord, LossPoint, Status};
use crate::model::DeepSetModel;
use crate::params::Bound;
use crate::tasks::{sample_circle_task, sample_gmm_task, BetaParams, Circle, CircleGmm, TaskKind};

/// Populations of one size stacked as `[B, n, 2]`, with their targets.
#[derive(Clone, Debug, PartialEq)]
pub enum Batch {
    Circle { x: Tensor, targets: Vec<Circle> },
    Mixture { x: Tensor, weights: Vec<f64> },
}

impl Batch {
    pub fn sample(task: TaskKind, rng: &mut Rng, size: usize, n: usize) -> Result<Batch> {
        let mut data = Vec::with_capacity(size * n * 2);
        match task {
            TaskKind::Circle => {
                let mut targets = Vec::with_capacity(size);
                for _ in 0..size {
                    let (x, c) = sample_circle_task(rng, n)?;
                    data.extend_from_slice(x.data());
                    targets.push(c);
                }
                Ok(Batch::Circle {
                    x: Tensor::new(vec![size, n, 2], data)?,
                    targets,
                })
            }
            TaskKind::Mixture => {
                let mut weights = Vec::with_capacity(size);
                for _ in 0..size {
                    let (x, w) = sample_gmm_task(rng, n)?;
                    data.extend_from_slice(x.data());
                    weights.push(w);
                }
                Ok(Batch::Mixture {
                    x: Tensor::new(vec![size, n, 2], data)?,
                    weights,
                })
            }
        }
    }

    pub fn x(&self) -> &Tensor {
        match self {
            Batch::Circle { x, .. } | Batch::Mixture { x, .. } => x,
        }
    }

    pub fn len(&self) -> usize {
        self.x().dims()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Splits into consecutive batches of at most `size` populations.
    pub fn chunks(&self, size: usize) -> Vec<Batch> {
        let dims = self.x().dims();
        let per = dims[1] * dims[2];
        let mut out = Vec::new();
        let mut start = 0;
        while start < dims[0] {
            let end = (start + size).min(dims[0]);
            let x = Tensor::new(
                vec![end - start, dims[1], dims[2]],
                self.x().data()[start * per..end * per].to_vec(),
            )
            .expect("chunk shape");
            out.push(match self {
                Batch::Circle { targets, .. } => Batch::Circle {
                    x,
                    targets: targets[start..end].to_vec(),
                },
                Batch::Mixture { weights, .. } => Batch::Mixture {
                    x,
                    weights: weights[start..end].to_vec(),
                },
            });
            start = end;
        }
        out
    }
}

/// Loss of `model` on `batch` recorded into `g`.
pub fn batch_loss(g: &Graph, p: &Bound, model: &DeepSetModel, batch: &Batch) -> Result<crate::autodiff::Var> {
    let y = model.forward(g, p, g.constant(batch.x().clone()))?;
    match batch {
        Batch::Circle { targets, .. } => circle_loss(g, y, targets),
        Batch::Mixture { weights, .. } => mixture_loss(g, y, weights),
    }
}

/// Incremental trainer; [`train`] drives it for a whole run.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: TrainConfig,
    model: DeepSetModel,
    adam: Adam,
    data: Rng,
    step: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let root = Rng::new(config.seed);
        let model = DeepSetModel::new(config.model_config(), &mut root.child("init"))?;
        let clip = (config.clip_norm > 0.0).then_some(config.clip_norm);
        let adam = Adam::new(model.params(), config.learning_rate).with_clip(clip);
        Ok(Trainer {
            data: root.child("data"),
            config,
            model,
            adam,
            step: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &DeepSetModel {
        &self.model
    }

    pub fn into_model(self) -> DeepSetModel {
        self.model
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    /// The batch for the next step; each step has its own random stream.
    pub fn next_batch(&self) -> Result<Batch> {
        let mut rng = self.data.child_indexed("batch", self.step as u64);
        let n = sample_population_size(&mut rng, self.config.n_min, self.config.n_max)?;
        Batch::sample(self.config.task, &mut rng, self.config.batch, n)
    }

    /// One optimizer update on `batch`; returns the loss before the update.
    pub fn step_on(&mut self, batch: &Batch) -> Result<f64> {
        let g = Graph::new();
        let p = self.model.params().bind(&g);
        let loss = batch_loss(&g, &p, &self.model, batch)?;
        let value = g.scalar(loss);
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss { step: self.step });
        }
        g.backward(loss)?;
        let grads = p.gradients(&g);
        let norm = self.adam.step(self.model.params_mut(), &grads)?;
        if !norm.is_finite() {
            return Err(Error::NonFiniteLoss { step: self.step });
        }
        self.step += 1;
        Ok(value)
    }

    pub fn step(&mut self) -> Result<f64> {
        let batch = self.next_batch()?;
        self.step_on(&batch)
    }

    /// Loss of the current parameters on `batch` without updating.
    pub fn loss_on(&self, batch: &Batch) -> Result<f64> {
        let g = Graph::new();
        let p = self.model.params().bind_frozen(&g);
        Ok(g.scalar(batch_loss(&g, &p, &self.model, batch)?))
    }
}

/// Held-out metrics of `model` on `count` fresh populations of size `n`.
pub fn evaluate(
    model: &DeepSetModel,
    task: TaskKind,
    rng: &Rng,
    count: usize,
    n: usize,
) -> Result<BTreeMap<String, f64>> {
    let held_out = Batch::sample(task, &mut rng.child("held_out"), count, n)?;
    let mut metrics = BTreeMap::new();
    let mut put = |k: &str, v: f64| {
        metrics.insert(k.to_string(), v);
    };
    match task {
        TaskKind::Circle => {
            let (mut center, mut radius) = (0.0, 0.0);
            let mut targets_all = Vec::with_capacity(count);
            for chunk in held_out.chunks(100) {
                let y = model.predict(chunk.x())?;
                let Batch::Circle { targets, .. } = &chunk else {
                    unreachable!()
                };
                for (row, t) in y.data().chunks(3).zip(targets) {
                    center += (row[0] - t.center[0]).powi(2) + (row[1] - t.center[1]).powi(2);
                    radius += (row[2] - t.radius).powi(2);
                }
                targets_all.extend_from_slice(targets);
            }
            let c = count as f64;
            put(metric::CENTER_MSE, center / c);
            put(metric::RADIUS_MSE, radius / c);
            put(metric::BEST_MSE, (center + radius) / c);
            put(metric::BASELINE_MSE, constant_baseline_mse(rng, &targets_all, n)?);
        }
        TaskKind::Mixture => {
            let (mut nll, mut abs) = (0.0, 0.0);
            for chunk in held_out.chunks(100) {
                let y = model.predict(chunk.x())?;
                let Batch::Mixture { weights, .. } = &chunk else {
                    unreachable!()
                };
                for (row, &w) in y.data().chunks(2).zip(weights) {
                    let beta = BetaParams::new(row[0], row[1])?;
                    nll -= beta.log_density(w)?;
                    abs += (beta.mean() - w).abs();
                }
            }
            put(metric::BETA_NLL, nll / count as f64);
            put(metric::MEAN_ABS_ERROR, abs / count as f64);
        }
    }
    Ok(metrics)
}

/// MSE on `targets` of always predicting the mean circle of an independent
/// sample from the same generator.
pub fn constant_baseline_mse(rng: &Rng, targets: &[Circle], n: usize) -> Result<f64> {
    let mut r = rng.child("baseline");
    let m = targets.len().max(1000);
    let mut mean = [0.0; 3];
    for _ in 0..m {
        let gmm = CircleGmm::sample(&mut r);
        let c = crate::tasks::welzl_min_circle(&gmm.draw(&mut r, n))?;
        for (acc, v) in mean.iter_mut().zip(c.to_vec()) {
            *acc += v / m as f64;
        }
    }
    let total: f64 = targets
        .iter()
        .map(|t| t.to_vec().iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum();
    Ok(total / targets.len() as f64)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct TrainOptions {
    /// Record wall-clock seconds (makes records non-reproducible).
    pub timing: bool,
    /// Print progress to stderr every this many steps; 0 is silent.
    pub progress_every: usize,
}

/// Full run: `config.steps` updates, then held-out evaluation.
pub fn train(config: &TrainConfig) -> Result<(DeepSetModel, ExperimentRecord)> {
    train_with(config, &TrainOptions::default())
}

pub fn train_with(config: &TrainConfig, options: &TrainOptions) -> Result<(DeepSetModel, ExperimentRecord)> {
    let started = Instant::now();
    let mut trainer = Trainer::new(config.clone())?;
    let mut record = new_record(config, trainer.model());
    let mut interval = (0.0, 0usize);
    let mut status = Status::Ok;
    while trainer.steps_done() < config.steps {
        match trainer.step() {
            Ok(loss) => {
                interval.0 += loss;
                interval.1 += 1;
            }
            Err(Error::NonFiniteLoss { step }) => {
                status = Status::NonFiniteLoss { step };
                break;
            }
            Err(e) => return Err(e),
        }
        let done = trainer.steps_done();
        if done % config.log_every == 0 || done == config.steps {
            let loss = interval.0 / interval.1 as f64;
            record.losses.push(LossPoint { step: done, loss });
            interval = (0.0, 0);
            if options.progress_every > 0 && done % options.progress_every == 0 {
                eprintln!("[{}] step {done}/{} loss {loss:.5}", record.run_id, config.steps);
            }
        }
    }
    record.steps = trainer.steps_done();
    if status.is_ok() {
        if let Some(last) = record.losses.last() {
            record.set_metric(metric::FINAL_LOSS, last.loss);
        }
        let eval_rng = Rng::new(config.seed).child("eval");
        let metrics = evaluate(
            trainer.model(),
            config.task,
            &eval_rng,
            config.eval_populations,
            config.eval_size(),
        )?;
        record.metrics.extend(metrics);
    }
    record.status = status;
    if options.timing {
        record.seconds = started.elapsed().as_secs_f64();
    }
    Ok((trainer.into_model(), record))
}

fn new_record(config: &TrainConfig, model: &DeepSetModel) -> ExperimentRecord {
    let mut notes = BTreeMap::new();
    notes.insert("embedding_width".into(), model.config().aggregation_width().to_string());
    notes.insert("max_population".into(), config.n_max.to_string());
    notes.insert("parameters".into(), model.params().numel().to_string());
    notes.insert(
        "hyperparameters".into(),
        "implementation defaults; the reference experiments do not report optimizer settings".into(),
    );
    ExperimentRecord {
        run_id: format!("{}__s{}", config.config_id(), config.seed),
        config_id: config.config_id(),
        fingerprint: config.fingerprint(),
        seed: config.seed,
        agg_equiv: config.equivariant.to_string(),
        agg_final: config.aggregation.to_string(),
        status: Status::Ok,
        steps: 0,
        seconds: 0.0,
        losses: Vec::new(),
        metrics: BTreeMap::new(),
        notes,
        config: config.clone(),
    }
}

#[cfg(test)]
mod tests;
