//! Minimal enclosing circles: Welzl's algorithm against brute force, and a
//! sample from the circle task.
//!
//! `cargo run --release --example min_circle`

use deepset::autodiff::Rng;
use deepset::tasks::{brute_force_min_circle, points_of, sample_circle_task, welzl_min_circle};

fn main() -> deepset::Result<()> {
    let mut rng = Rng::new(5);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = 1 + rng.below(12);
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.uniform_in(-2.0, 2.0), rng.uniform_in(-2.0, 2.0)])
            .collect();
        let a = welzl_min_circle(&pts)?;
        let b = brute_force_min_circle(&pts)?;
        worst = worst.max((a.radius - b.radius).abs());
    }
    println!("largest radius difference over 200 small instances: {worst:.2e}");

    let (population, circle) = sample_circle_task(&mut rng, 20)?;
    let pts = points_of(&population)?;
    let on_boundary = pts
        .iter()
        .filter(|p| (circle.distance_to(**p) - circle.radius).abs() < 1e-9)
        .count();
    println!(
        "task sample: center ({:.3}, {:.3}), radius {:.3}, {on_boundary} of 20 particles on the boundary",
        circle.center[0], circle.center[1], circle.radius
    );
    for p in pts.iter().take(5) {
        println!("  ({:>7.3}, {:>7.3})", p[0], p[1]);
    }
    println!("  …");
    Ok(())
}
