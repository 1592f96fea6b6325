use serde::{Deserialize, Serialize};

use super::stats::median;
use super::sweep::{mixture_estimate, predict_all, subsample, Mother};
use super::Status;
use crate::autodiff::Rng;
use crate::error::{Error, Result};
use crate::model::DeepSetModel;
use crate::tasks::dataset::Target;
use crate::tasks::{em_fit_weights, points_of, Kde};

/// Estimates gathered per population size from each estimator.
pub const ESTIMATES_PER_SIZE: usize = 100;

/// KDE comparison of model and EM estimates at one population size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmRow {
    pub n: usize,
    pub status: Status,
    /// `ln KDE_model(w) − ln KDE_EM(w)`; positive when the model puts more
    /// density on the true weight. `None` unless the status is ok.
    pub log_ratio: Option<f64>,
    pub model_median: f64,
    /// `None` when EM failed on every subsample.
    pub em_median: Option<f64>,
}

impl EmRow {
    /// The opposite sign: negative when EM is outperformed.
    pub fn log_ratio_em_minus_model(&self) -> Option<f64> {
        self.log_ratio.map(|r| -r)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmComparison {
    pub truth: f64,
    pub estimates: usize,
    pub rows: Vec<EmRow>,
}

/// Scores the true weight under KDEs of each estimator's sampling
/// distribution; `model` and `em` are the two estimate sets.
pub fn kde_log_ratio(model: &[f64], em: &[f64], truth: f64) -> Result<f64> {
    let m = Kde::fit(model)?;
    let e = Kde::fit(em)?;
    Ok(m.log_density(truth) - e.log_density(truth))
}

/// For each size, fits EM and runs the model on the same
/// [`ESTIMATES_PER_SIZE`] subsamples of a mixture `mother`.
pub fn em_comparison(model: &DeepSetModel, mother: &Mother, sizes: &[usize], rng: &Rng) -> Result<EmComparison> {
    em_comparison_with(model, mother, sizes, ESTIMATES_PER_SIZE, rng)
}

pub fn em_comparison_with(
    model: &DeepSetModel,
    mother: &Mother,
    sizes: &[usize],
    estimates: usize,
    rng: &Rng,
) -> Result<EmComparison> {
    let Target::Mixture(truth) = mother.target else {
        return Err(Error::InvalidConfig("EM comparison needs a mixture population".into()));
    };
    if estimates == 0 {
        return Err(Error::InvalidConfig("at least one estimate per size".into()));
    }
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    let mut rows = Vec::with_capacity(sizes.len());
    for n in sizes {
        let r = rng.child_indexed("size", n as u64);
        let mut draw = r.child("subsample");
        let subs = (0..estimates)
            .map(|_| subsample(&mother.population, n, &mut draw))
            .collect::<Result<Vec<_>>>()?;
        let model_est = predict_all(model, &subs)?
            .iter()
            .map(|o| mixture_estimate(o))
            .collect::<Result<Vec<_>>>()?;
        let mut em_est = Vec::with_capacity(estimates);
        let mut failure = None;
        for (i, sub) in subs.iter().enumerate() {
            match em_fit_weights(&points_of(sub)?, &mut r.child_indexed("em", i as u64)) {
                Ok(w) => em_est.push(w),
                Err(e) => {
                    failure = Some(format!("em: {e}"));
                    break;
                }
            }
        }
        let (status, log_ratio) = match failure {
            Some(message) => (Status::Failed { message }, None),
            None => match (Kde::fit(&model_est), Kde::fit(&em_est)) {
                (Ok(m), Ok(e)) => (Status::Ok, Some(m.log_density(truth) - e.log_density(truth))),
                (Err(Error::DegenerateKde), _) => (degenerate("model"), None),
                (_, Err(Error::DegenerateKde)) => (degenerate("em"), None),
                (Err(e), _) | (_, Err(e)) => return Err(e),
            },
        };
        rows.push(EmRow {
            n,
            status,
            log_ratio,
            model_median: median(&model_est),
            em_median: (!em_est.is_empty()).then(|| median(&em_est)),
        });
    }
    Ok(EmComparison { truth, estimates, rows })
}

fn degenerate(side: &str) -> Status {
    Status::Failed {
        message: format!("degenerate kde of the {side} estimates"),
    }
}
