//! Mixture weights: trains with random population sizes, then follows the
//! estimate as the population grows and compares it with EM.
//!
//! `cargo run --release --example mixture -- 3000`

use deepset::autodiff::Rng;
use deepset::harness::{em_comparison, sweep_population, Mother, MOTHER_SIZE, SWEEP_SIZES};
use deepset::tasks::dataset::Target;
use deepset::tasks::TaskKind;
use deepset::training::{train_with, TrainConfig, TrainOptions};

fn main() -> deepset::Result<()> {
    let steps = std::env::args()
        .nth(1)
        .map_or(Ok(2000), |s| s.parse())
        .expect("step count");
    let mut config = TrainConfig::mixture("mean".parse()?, "r-sum".parse()?, 2);
    config.steps = steps;
    config.eval_populations = 200;
    let options = TrainOptions {
        timing: false,
        progress_every: (steps / 5).max(1),
    };
    let (model, record) = train_with(&config, &options)?;
    println!("{}: {:?}", record.run_id, record.metrics);

    let rng = Rng::new(9);
    let mother = Mother::sample(TaskKind::Mixture, &mut rng.child("mother"), MOTHER_SIZE)?;
    let Target::Mixture(w) = mother.target else {
        unreachable!()
    };
    println!("\ntrue weight {w:.4}");
    let sweep = sweep_population(&model, &mother, &SWEEP_SIZES, 100, &rng)?;
    println!(
        "{:>6} {:>8} {:>18} {:>18}",
        "n", "median", "50% interval", "90% interval"
    );
    for s in &sweep.summaries {
        let e = s.estimate;
        println!(
            "{:>6} {:>8.4} {:>8.4} – {:<7.4} {:>8.4} – {:<7.4}",
            s.n, e.p50, e.p25, e.p75, e.p5, e.p95
        );
    }

    let cmp = em_comparison(&model, &mother, &[10, 50, 100, 500], &rng)?;
    println!(
        "\n{:>6} {:>22} {:>12} {:>12}",
        "n", "ln KDE_model − ln KDE_EM", "model med.", "EM med."
    );
    for row in &cmp.rows {
        let ratio = row.log_ratio.map_or(row.status.to_string(), |r| format!("{r:+.4}"));
        let em = row.em_median.map_or("-".into(), |m| format!("{m:.4}"));
        println!("{:>6} {:>22} {:>12.4} {:>12}", row.n, ratio, row.model_median, em);
    }
    Ok(())
}
