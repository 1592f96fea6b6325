//! Reverse-mode gradients against central differences, for a hand-written
//! function and for a whole model's loss with respect to its input.
//!
//! `cargo run --release --example gradient_check`

use deepset::autodiff::{grad_check, Graph, Rng, Shape, Tensor, Var};
use deepset::model::{AggregationSpec, DeepSetModel, ModelConfig, OutputHead};
use deepset::tasks::Circle;
use deepset::training::circle_loss;

fn main() -> deepset::Result<()> {
    let f = |g: &Graph, x: Var| {
        let y = g.mul(g.tanh(x), g.exp(g.scale(x, -0.5)))?;
        g.logsumexp(y, 0)
    };
    let x = Tensor::vector(vec![0.3, -1.2, 2.0, 0.7]);
    println!(
        "tanh·exp then log-sum-exp: relative error {:.2e}",
        grad_check(f, &x, 1e-5)?
    );

    let mut rng = Rng::new(11);
    let target = [Circle::new([0.5, -0.25], 1.5)];
    for label in ["mean", "q-lse", "r-mean"] {
        let spec: AggregationSpec = label.parse()?;
        let model = DeepSetModel::new(ModelConfig::standard(8, spec, spec, OutputHead::Circle), &mut rng)?;
        let population = rng.normal(&Shape::new(vec![7, 2])?, 0.0, 1.0)?;
        let loss = |g: &Graph, x: Var| {
            let p = model.params().bind_frozen(g);
            circle_loss(g, model.forward(g, &p, x)?, &target)
        };
        println!(
            "{label:<7} circle loss w.r.t. particles: {:.2e}",
            grad_check(loss, &population, 1e-5)?
        );
    }
    Ok(())
}
