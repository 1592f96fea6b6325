use super::{Graph, Tensor, Var};
use crate::error::Result;

/// Largest coordinate-wise disagreement between the reverse-mode gradient of
/// a scalar function and its central difference,
/// `|analytic − numeric| / max(1, |analytic|, |numeric|)`.
///
/// The caller keeps `x` away from kinks of max/percentile selections.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&Graph, Var) -> Result<Var>,
{
    let g = Graph::new();
    let xv = g.param(x.clone());
    let y = f(&g, xv)?;
    g.backward(y)?;
    let analytic = g
        .grad(xv)
        .map(Tensor::into_data)
        .unwrap_or_else(|| vec![0.0; x.numel()]);

    let eval = |t: Tensor| -> Result<f64> {
        let g = Graph::new();
        let v = g.constant(t);
        let y = f(&g, v)?;
        Ok(g.scalar(y))
    };

    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * h);
        let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}
