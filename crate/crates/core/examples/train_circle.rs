//! Trains a circle model with recurrent layers and reports held-out MSE
//! against the constant baseline. The step count defaults to a short run;
//! pass the full 20000 as the first argument.
//!
//! `cargo run --release --example train_circle -- 2000`

use deepset::harness::metric;
use deepset::training::{train_with, TrainConfig, TrainOptions};

fn main() -> deepset::Result<()> {
    let steps = std::env::args()
        .nth(1)
        .map_or(Ok(1000), |s| s.parse())
        .expect("step count");
    let mut config = TrainConfig::circle("r-mean".parse()?, "r-mean".parse()?, 1);
    config.steps = steps;
    config.eval_populations = 500;
    let options = TrainOptions {
        timing: true,
        progress_every: (steps / 5).max(1),
    };
    let (model, record) = train_with(&config, &options)?;
    let get = |k| record.metric(k).unwrap_or(f64::NAN);
    println!(
        "{} after {} steps ({:.0} s)",
        record.run_id, record.steps, record.seconds
    );
    println!("  center MSE   {:.4}", get(metric::CENTER_MSE));
    println!("  radius MSE   {:.4}", get(metric::RADIUS_MSE));
    println!("  total        {:.4}", get(metric::BEST_MSE));
    println!("  baseline     {:.4}", get(metric::BASELINE_MSE));

    let out = std::path::Path::new("target/example-circle.bin");
    model.save(out)?;
    println!("parameters saved to {}", out.display());
    Ok(())
}
