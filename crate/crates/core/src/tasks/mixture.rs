//! Mixture-weight task: two isotropic Gaussians with antipodal means on the
//! unit circle, plus the classical estimators it is compared against.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::autodiff::{Graph, Rng, Tensor, Var};
use crate::error::{Error, Result};

pub const MIXTURE_SIGMA: f64 = 0.75;
pub const WEIGHT_RANGE: (f64, f64) = (0.05, 0.95);
pub const MIXTURE_EVAL_SIZE: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gmm2 {
    /// Weight of the component centered at `m₁`.
    pub weight: f64,
    /// Angle of `m₁` in `[0, π)`.
    pub angle: f64,
    pub sigma: f64,
}

impl Gmm2 {
    pub fn sample(rng: &mut Rng) -> Self {
        Gmm2 {
            weight: rng.uniform_in(WEIGHT_RANGE.0, WEIGHT_RANGE.1),
            angle: rng.uniform_in(0.0, PI),
            sigma: MIXTURE_SIGMA,
        }
    }

    /// `(m₁, m₂)` with `m₂ = −m₁`.
    pub fn means(&self) -> ([f64; 2], [f64; 2]) {
        let m = [self.angle.cos(), self.angle.sin()];
        (m, [-m[0], -m[1]])
    }

    /// The regression target `min(w, 1 − w)`.
    pub fn weight_small(&self) -> f64 {
        self.weight.min(1.0 - self.weight)
    }

    /// Particles as `[n × 2]` and whether each came from the first component.
    pub fn draw(&self, rng: &mut Rng, n: usize) -> Result<(Tensor, Vec<bool>)> {
        let (m1, m2) = self.means();
        let mut data = Vec::with_capacity(2 * n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let first = rng.unit() < self.weight;
            let m = if first { m1 } else { m2 };
            data.push(m[0] + self.sigma * rng.standard_normal());
            data.push(m[1] + self.sigma * rng.standard_normal());
            labels.push(first);
        }
        Ok((Tensor::new(vec![n, 2], data)?, labels))
    }

    /// Error rate of the Bayes-optimal rule on labelled particles. The rule is
    /// linear in `x`, and no linear classifier can do better in expectation.
    pub fn bayes_error(&self, population: &Tensor, labels: &[bool]) -> f64 {
        let (m, _) = self.means();
        let bias = (self.weight / (1.0 - self.weight)).ln();
        let s2 = self.sigma * self.sigma;
        let wrong = population
            .rows()
            .zip(labels)
            .filter(|(x, &l)| ((2.0 * (x[0] * m[0] + x[1] * m[1]) / s2 + bias) > 0.0) != l)
            .count();
        wrong as f64 / labels.len().max(1) as f64
    }
}

/// One mixture-task example: a population and `min(w, 1 − w)`.
pub fn sample_gmm_task(rng: &mut Rng, n: usize) -> Result<(Tensor, f64)> {
    if n < 2 {
        return Err(Error::Domain(format!("mixture task needs n ≥ 2, got {n}")));
    }
    let gmm = Gmm2::sample(rng);
    let (x, _) = gmm.draw(rng, n)?;
    Ok((x, gmm.weight_small()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub a: f64,
    pub b: f64,
}

impl BetaParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Domain(format!(
                "beta concentrations must be positive, got ({a}, {b})"
            )));
        }
        Ok(BetaParams { a, b })
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    pub fn log_density(&self, w: f64) -> Result<f64> {
        check_unit(w)?;
        Ok((self.a - 1.0) * w.ln() + (self.b - 1.0) * (1.0 - w).ln() - ln_beta(self.a, self.b))
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

fn check_unit(w: f64) -> Result<()> {
    if w > 0.0 && w < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("beta support is (0, 1), got {w}")))
    }
}

/// Elementwise `ln Beta(w; a, b)` on the graph; `a`, `b` have `w.len()`
/// elements.
pub fn beta_log_likelihood(g: &Graph, a: Var, b: Var, w: &[f64]) -> Result<Var> {
    for &x in w {
        check_unit(x)?;
    }
    let dims = g.dims(a);
    let ln_w = g.constant(Tensor::new(dims.clone(), w.iter().map(|x| x.ln()).collect())?);
    let ln_1mw = g.constant(Tensor::new(dims, w.iter().map(|x| (1.0 - x).ln()).collect())?);
    let first = g.mul(g.offset(a, -1.0), ln_w)?;
    let second = g.mul(g.offset(b, -1.0), ln_1mw)?;
    let norm = g.sub(g.add(g.ln_gamma(a), g.ln_gamma(b))?, g.ln_gamma(g.add(a, b)?))?;
    g.sub(g.add(first, second)?, norm)
}

pub const EM_RESTARTS: usize = 5;
pub const EM_MAX_ITERS: usize = 500;
pub const EM_TOL: f64 = 1e-8;

/// A two-component isotropic fit with shared variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmFit {
    pub weight: f64,
    pub means: [[f64; 2]; 2],
    pub sigma: f64,
    pub log_likelihood: f64,
    /// Log-likelihood after every iteration of the winning restart.
    pub trace: Vec<f64>,
}

impl EmFit {
    pub fn weight_small(&self) -> f64 {
        self.weight.min(1.0 - self.weight)
    }
}

fn log_normal2(x: &[f64], m: &[f64; 2], var: f64) -> f64 {
    let dx = x[0] - m[0];
    let dy = x[1] - m[1];
    -(dx * dx + dy * dy) / (2.0 * var) - (2.0 * PI * var).ln()
}

fn degenerate(var: f64) -> bool {
    !(var >= 1e-12) || !var.is_finite()
}

/// One EM run from the given start; `None` when the variance collapses.
fn em_run(points: &[[f64; 2]], mut means: [[f64; 2]; 2], mut var: f64) -> Option<EmFit> {
    let n = points.len() as f64;
    let mut weight: f64 = 0.5;
    let mut trace = Vec::new();
    let mut resp = vec![0.0; points.len()];
    for _ in 0..EM_MAX_ITERS {
        if degenerate(var) {
            return None;
        }
        // E-step; its normalizers give the log-likelihood at the current parameters.
        let (lw1, lw2) = (weight.ln(), (1.0 - weight).ln());
        let mut ll: f64 = 0.0;
        for (r, p) in resp.iter_mut().zip(points) {
            let a = lw1 + log_normal2(p, &means[0], var);
            let b = lw2 + log_normal2(p, &means[1], var);
            let m = a.max(b);
            let lse = m + ((a - m).exp() + (b - m).exp()).ln();
            *r = (a - lse).exp();
            ll += lse;
        }
        if !ll.is_finite() {
            return None;
        }
        let converged = trace.last().is_some_and(|&prev: &f64| ll - prev < EM_TOL);
        trace.push(ll);
        if converged {
            break;
        }
        // M-step.
        let s1: f64 = resp.iter().sum();
        let s2 = n - s1;
        if s1 <= 0.0 || s2 <= 0.0 {
            return None;
        }
        let mut m = [[0.0; 2]; 2];
        for (r, p) in resp.iter().zip(points) {
            for d in 0..2 {
                m[0][d] += r * p[d];
                m[1][d] += (1.0 - r) * p[d];
            }
        }
        m[0].iter_mut().for_each(|v| *v /= s1);
        m[1].iter_mut().for_each(|v| *v /= s2);
        let mut ss = 0.0;
        for (r, p) in resp.iter().zip(points) {
            let d1 = (p[0] - m[0][0]).powi(2) + (p[1] - m[0][1]).powi(2);
            let d2 = (p[0] - m[1][0]).powi(2) + (p[1] - m[1][1]).powi(2);
            ss += r * d1 + (1.0 - r) * d2;
        }
        means = m;
        var = ss / (2.0 * n);
        weight = s1 / n;
        if !(weight > 0.0 && weight < 1.0) {
            return None;
        }
    }
    let log_likelihood = *trace.last()?;
    Some(EmFit {
        weight,
        means,
        sigma: var.sqrt(),
        log_likelihood,
        trace,
    })
}

/// Expectation maximization with random restarts, keeping the fit with the
/// highest log-likelihood.
pub fn em_fit(points: &[[f64; 2]], rng: &mut Rng) -> Result<EmFit> {
    let n = points.len();
    if n < 4 {
        return Err(Error::Domain(format!("EM needs n ≥ 4, got {n}")));
    }
    let mean = [
        points.iter().map(|p| p[0]).sum::<f64>() / n as f64,
        points.iter().map(|p| p[1]).sum::<f64>() / n as f64,
    ];
    let total_var = points
        .iter()
        .map(|p| (p[0] - mean[0]).powi(2) + (p[1] - mean[1]).powi(2))
        .sum::<f64>()
        / (2.0 * n as f64);
    let mut best: Option<EmFit> = None;
    for _ in 0..EM_RESTARTS {
        let i = rng.below(n);
        let mut j = rng.below(n - 1);
        if j >= i {
            j += 1;
        }
        if let Some(fit) = em_run(points, [points[i], points[j]], total_var) {
            if best.as_ref().is_none_or(|b| fit.log_likelihood > b.log_likelihood) {
                best = Some(fit);
            }
        }
    }
    best.ok_or(Error::DegenerateFit)
}

/// `min(w, 1 − w)` of the best EM fit.
pub fn em_fit_weights(points: &[[f64; 2]], rng: &mut Rng) -> Result<f64> {
    Ok(em_fit(points, rng)?.weight_small())
}

/// Gaussian kernel density estimate with Silverman's bandwidth.
#[derive(Clone, Debug, PartialEq)]
pub struct Kde {
    samples: Vec<f64>,
    bandwidth: f64,
    std: f64,
}

impl Kde {
    pub fn fit(samples: &[f64]) -> Result<Self> {
        let m = samples.len();
        if m == 0 {
            return Err(Error::EmptyInput);
        }
        if m < 2 || samples.iter().any(|x| !x.is_finite()) || samples.iter().all(|&x| x == samples[0]) {
            return Err(Error::DegenerateKde);
        }
        let mean = samples.iter().sum::<f64>() / m as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        let std = var.sqrt();
        if !(std > 0.0) {
            return Err(Error::DegenerateKde);
        }
        Ok(Kde {
            samples: samples.to_vec(),
            bandwidth: 1.06 * std * (m as f64).powf(-0.2),
            std,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    pub fn log_density(&self, q: f64) -> f64 {
        let h = self.bandwidth;
        let terms: Vec<f64> = self.samples.iter().map(|x| -0.5 * ((q - x) / h).powi(2)).collect();
        let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln();
        lse - (self.samples.len() as f64 * h * (2.0 * PI).sqrt()).ln()
    }
}

pub fn kde_log_score(samples: &[f64], query: f64) -> Result<f64> {
    Ok(Kde::fit(samples)?.log_density(query))
}
