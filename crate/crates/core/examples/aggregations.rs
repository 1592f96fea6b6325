//! Simple aggregations side by side, mean and log-sum-exp as sum
//! isomorphisms, and how log-sum-exp slides from max towards a shifted sum.
//!
//! `cargo run --release --example aggregations`

use deepset::aggregation::{aggregate, aggregate_isomorphic, interpolation_profile, SimpleAggregation, SumIsomorphism};
use deepset::autodiff::{Graph, Tensor};

fn main() -> deepset::Result<()> {
    let x = Tensor::from_rows(&[vec![1.0, -2.0], vec![3.0, 0.5], vec![0.0, 0.25], vec![2.0, -1.0]])?;
    let g = Graph::new();
    let v = g.constant(x.clone());
    for agg in [
        SimpleAggregation::Sum,
        SimpleAggregation::Mean,
        SimpleAggregation::Max,
        SimpleAggregation::LogSumExp,
        SimpleAggregation::Percentile(0.5),
    ] {
        println!("{:<10} {:?}", agg.to_string(), g.value(aggregate(&g, agg, v)?).data());
    }

    println!("\nthe same through g ∘ Σ ∘ g⁻¹:");
    for iso in [SumIsomorphism::Count, SumIsomorphism::Log] {
        println!("{iso:<10?} {:?}", g.value(aggregate_isomorphic(&g, iso, v)?).data());
    }

    // doubling every particle adds ln 2 to log-sum-exp and leaves the mean alone
    let doubled = Tensor::from_rows(&(0..8).map(|i| x.row(i % 4).to_vec()).collect::<Vec<_>>())?;
    let d = g.constant(doubled);
    let lse = |v| g.value(aggregate(&g, SimpleAggregation::LogSumExp, v).unwrap()).data()[0];
    println!(
        "\nLΣE shift from duplicating: {:.12} (ln 2 = {:.12})",
        lse(d) - lse(v),
        2f64.ln()
    );

    println!("\n{:>8} {:>14} {:>18}", "scale", "|LΣE − max|", "|LΣE − linear|");
    let scales = [1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0];
    for row in interpolation_profile(&x, &scales)? {
        println!("{:>8} {:>14.6} {:>18.6}", row.scale, row.gap_to_max, row.gap_to_linear);
    }
    println!("ln n = {:.6}", 4f64.ln());
    Ok(())
}
