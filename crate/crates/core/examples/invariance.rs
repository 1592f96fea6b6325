//! Shuffles a population and checks that every aggregation pairing gives
//! the same prediction.
//!
//! `cargo run --release --example invariance`

use deepset::autodiff::{Rng, Shape};
use deepset::model::{AggregationSpec, DeepSetModel, ModelConfig, OutputHead};

fn main() -> deepset::Result<()> {
    let mut rng = Rng::new(7);
    let x = rng.normal(&Shape::new(vec![25, 2])?, 0.0, 1.5)?;
    let shuffled = x.permute_rows(&rng.permutation(25));

    println!("{:<12} {:<12} {:>12}", "equivariant", "final", "max |Δ|");
    let mut worst: f64 = 0.0;
    for equiv in AggregationSpec::grid() {
        for agg in AggregationSpec::grid() {
            let config = ModelConfig::standard(16, equiv, agg, OutputHead::Circle);
            let mut model = DeepSetModel::new(config, &mut rng.child(&format!("{equiv}{agg}")))?;
            // queries start at zero; move them so attention is not uniform
            for t in model.params_mut().tensors_mut() {
                for v in t.data_mut() {
                    *v += 0.1 * rng.standard_normal();
                }
            }
            let a = model.predict(&x)?;
            let b = model.predict(&shuffled)?;
            let gap = a
                .data()
                .iter()
                .zip(b.data())
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max);
            worst = worst.max(gap);
            println!("{:<12} {:<12} {:>12.3e}", equiv.to_string(), agg.to_string(), gap);
        }
    }
    println!("largest difference over 81 models: {worst:.3e}");
    Ok(())
}
