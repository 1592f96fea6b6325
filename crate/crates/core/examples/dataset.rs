//! Fixed datasets as JSON lines, written and read back.
//!
//! `cargo run --release --example dataset -- /tmp/deepset-data`

use std::path::PathBuf;

use deepset::autodiff::Rng;
use deepset::tasks::dataset::{generate, read_jsonl, write_jsonl, Target};
use deepset::tasks::TaskKind;

fn main() -> deepset::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/example-data".into()));
    std::fs::create_dir_all(&dir).map_err(|e| deepset::Error::io(&dir, e))?;
    for (task, n) in [(TaskKind::Circle, 20), (TaskKind::Mixture, 100)] {
        let records = generate(task, 50, n, &Rng::new(1))?;
        let path = dir.join(format!("{task}.jsonl"));
        write_jsonl(&path, &records)?;
        let back = read_jsonl(&path)?;
        assert_eq!(back, records);
        let first = match back[0].target {
            Target::Circle(c) => format!("circle r = {:.3}", c.radius),
            Target::Mixture(w) => format!("weight {w:.3}"),
        };
        println!(
            "{}: {} populations of {n}; first target {first}",
            path.display(),
            back.len()
        );
    }
    Ok(())
}
