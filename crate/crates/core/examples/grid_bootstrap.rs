//! A small recurrence grid on the circle task, its bootstrap median-best
//! table, and the CSV/JSON reports. Records are cached in the output
//! directory, so an interrupted run resumes where it stopped.
//!
//! `cargo run --release --example grid_bootstrap -- target/example-grid`

use std::path::PathBuf;

use deepset::aggregation::SimpleAggregation;
use deepset::autodiff::Rng;
use deepset::harness::{bootstrap_table, metric, report, run_grid, Grid, GridOptions, GroupBy};
use deepset::training::{TrainConfig, TrainOptions};

fn main() -> deepset::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/example-grid".into()));
    let mut base = TrainConfig::circle("mean".parse()?, "mean".parse()?, 3);
    base.steps = 300;
    base.width = 32;
    base.eval_populations = 200;
    let grid = Grid::recurrence_table(SimpleAggregation::Mean, 3);
    let options = GridOptions {
        out_dir: Some(dir.clone()),
        workers: 0,
        train: TrainOptions::default(),
    };
    let records = run_grid(&base, &grid, &options)?;
    for r in &records {
        println!(
            "{:<36} {:<6} {:.4}",
            r.run_id,
            r.status.to_string(),
            r.metric(metric::BEST_MSE).unwrap_or(f64::NAN)
        );
    }

    let rows = bootstrap_table(&records, metric::BEST_MSE, GroupBy::Recurrence, 5, 10_000, &Rng::new(0))?;
    println!();
    for row in &rows {
        println!("{:<34} median best {:.4}", row.group, row.median_best);
    }
    let a = report::write_records(&dir, "grid", &records)?;
    let b = report::write_bootstrap(&dir, "bootstrap", &rows)?;
    println!("\n{}\n{}", a.csv.display(), b.csv.display());
    Ok(())
}
