use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::autodiff::{Graph, Rng, Tensor, Var};
use crate::error::{Error, Result};
use crate::tasks::{beta_log_likelihood, Circle};

/// Draws `n ∈ [n_min, n_max]` with `P(N = n) ∝ n`.
pub fn sample_population_size(rng: &mut Rng, n_min: usize, n_max: usize) -> Result<usize> {
    if n_min > n_max || n_max == 0 {
        return Err(Error::InvalidRange { min: n_min, max: n_max });
    }
    if n_min == n_max {
        return Ok(n_min);
    }
    let dist =
        WeightedIndex::new((n_min..=n_max).map(|n| n as f64)).map_err(|e| Error::InvalidDistribution(e.to_string()))?;
    Ok(n_min + dist.sample(rng))
}

fn batch_dims(g: &Graph, pred: Var, width: usize, count: usize, op: &str) -> Result<Vec<usize>> {
    let dims = g.dims(pred);
    let rows: usize = dims[..dims.len().saturating_sub(1)].iter().product();
    if dims.last() != Some(&width) || rows != count || dims.len() > 2 {
        return Err(Error::InvalidConfig(format!(
            "{op}: prediction of shape {} does not match {count} targets",
            g.shape(pred)
        )));
    }
    Ok(dims)
}

/// Mean over the batch of `‖ĉ − c‖² + (r̂ − r)²`; `pred` is `[3]` or `[B, 3]`.
pub fn circle_loss(g: &Graph, pred: Var, targets: &[Circle]) -> Result<Var> {
    let dims = batch_dims(g, pred, 3, targets.len(), "circle_loss")?;
    let t = Tensor::new(dims, targets.iter().flat_map(|c| c.to_vec()).collect())?;
    let diff = g.sub(pred, g.constant(t))?;
    let total = g.sum_all(g.square(diff))?;
    Ok(g.scale(total, 1.0 / targets.len() as f64))
}

/// Mean over the batch of `−ln Beta(w; a, b)`; `pred` holds the positive
/// concentrations `(a, b)` as `[2]` or `[B, 2]`.
pub fn mixture_loss(g: &Graph, pred: Var, weights: &[f64]) -> Result<Var> {
    let dims = batch_dims(g, pred, 2, weights.len(), "mixture_loss")?;
    let axis = dims.len() - 1;
    let b = weights.len();
    let alpha = g.reshape(g.slice(pred, axis, 0, 1)?, &[b])?;
    let beta = g.reshape(g.slice(pred, axis, 1, 2)?, &[b])?;
    let ll = beta_log_likelihood(g, alpha, beta, weights)?;
    Ok(g.scale(g.sum_all(ll)?, -1.0 / b as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;

    #[test]
    fn singleton_range() {
        let mut rng = Rng::new(0);
        for _ in 0..100 {
            assert_eq!(sample_population_size(&mut rng, 100, 100).unwrap(), 100);
        }
        assert!(matches!(
            sample_population_size(&mut rng, 5, 4),
            Err(Error::InvalidRange { min: 5, max: 4 })
        ));
    }

    #[test]
    fn two_point_range_frequency() {
        let mut rng = Rng::new(1);
        let twos = (0..10_000)
            .filter(|_| sample_population_size(&mut rng, 1, 2).unwrap() == 2)
            .count();
        assert!((twos as f64 / 1e4 - 2.0 / 3.0).abs() < 0.02);
    }

    #[test]
    fn mean_matches_linear_law() {
        let mut rng = Rng::new(2);
        let draws = 100_000;
        let total: usize = (0..draws)
            .map(|_| sample_population_size(&mut rng, 10, 100).unwrap())
            .sum();
        let s1: f64 = (10..=100).map(|n| n as f64).sum();
        let s2: f64 = (10..=100).map(|n| (n * n) as f64).sum();
        assert!((total as f64 / draws as f64 - s2 / s1).abs() < 1.0);
    }

    #[test]
    fn circle_loss_examples() {
        let g = Graph::new();
        let c = Circle::new([0.5, -1.0], 2.0);
        let exact = g.constant(Tensor::vector(c.to_vec()));
        assert_eq!(g.scalar(circle_loss(&g, exact, &[c]).unwrap()), 0.0);
        let off = g.constant(Tensor::vector(vec![1.5, -1.0, 2.0]));
        assert_eq!(g.scalar(circle_loss(&g, off, &[c]).unwrap()), 1.0);
        let batch = g.constant(Tensor::new(vec![2, 3], vec![1.5, -1.0, 2.0, 0.5, -1.0, 2.0]).unwrap());
        assert_eq!(g.scalar(circle_loss(&g, batch, &[c, c]).unwrap()), 0.5);
        assert!(circle_loss(&g, batch, &[c]).is_err());
    }

    #[test]
    fn circle_loss_gradient() {
        let targets = [Circle::new([0.3, 0.1], 1.2), Circle::new([-2.0, 1.0], 0.4)];
        let x = Tensor::new(vec![2, 3], vec![0.1, -0.4, 2.0, 1.0, 0.7, 0.9]).unwrap();
        let err = grad_check(|g, p| circle_loss(g, p, &targets), &x, 1e-5).unwrap();
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn mixture_loss_examples() {
        let g = Graph::new();
        let uniform = g.constant(Tensor::vector(vec![1.0, 1.0]));
        assert!(g.scalar(mixture_loss(&g, uniform, &[0.3]).unwrap()).abs() < 1e-14);
        let peaked = g.constant(Tensor::vector(vec![60.0, 140.0]));
        assert!(g.scalar(mixture_loss(&g, peaked, &[0.3]).unwrap()) < 0.0);
        assert!(matches!(mixture_loss(&g, peaked, &[1.3]), Err(Error::Domain(_))));
    }

    #[test]
    fn mixture_loss_gradient() {
        let w = [0.12, 0.4, 0.33];
        let x = Tensor::new(vec![3, 2], vec![0.8, 2.0, 5.0, 7.5, 1.3, 1.1]).unwrap();
        let err = grad_check(|g, p| mixture_loss(g, p, &w), &x, 1e-5).unwrap();
        assert!(err <= 1e-5, "{err}");
    }
}
