//! End-to-end acceptance checks, one line per criterion.
//!
//! The two training experiments cache their records and models under
//! `$DEEPSET_ACCEPTANCE_DIR` (default: `target/tmp/acceptance`); delete it
//! to retrain from scratch. Runtimes are reported for the work done in the
//! current invocation. `DEEPSET_ACCEPTANCE_ONLY=1,3` runs a subset.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use deepset::aggregation::{interpolation_profile, SimpleAggregation};
use deepset::autodiff::{grad_check, Graph, OpKind, Rng, Shape, Tensor, Var};
use deepset::harness::{
    bootstrap_table, em_comparison, metric, record_path, recurrence_label, run_grid, sweep_population, Grid,
    GridOptions, GroupBy, Mother, MOTHER_SIZE, SWEEP_SIZES,
};
use deepset::model::{Activation, AggregationSpec, CombineSpec, DeepSetModel, ModelConfig, OutputHead};
use deepset::tasks::dataset::Target;
use deepset::tasks::{brute_force_min_circle, welzl_min_circle, Circle, TaskKind};
use deepset::training::{circle_loss, mixture_loss, train_with, TrainConfig, TrainOptions};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("permutation invariance", invariance),
        ("gradient checks", gradients),
        ("minimal circle oracle", min_circle),
        ("log-sum-exp interpolation", lse_profile),
        ("circle experiment", circle_experiment),
        ("mixture experiment", mixture_experiment),
        ("CLI determinism", determinism),
        ("out-of-scope datasets absent", out_of_scope),
    ];
    let only: Option<Vec<usize>> = std::env::var("DEEPSET_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        ran += 1;
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        println!("criterion {} ({name}): {verdict}  {}", i + 1, result.detail);
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn cache_dir() -> PathBuf {
    std::env::var_os("DEEPSET_ACCEPTANCE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance"))
}

/// Wall-clock seconds spent training the cached artifacts of `name`,
/// accumulated across invocations that did any training.
fn training_seconds(name: &str, trained: bool, elapsed: f64) -> f64 {
    let path = cache_dir().join(format!("{name}.seconds"));
    let before: f64 = fs::read_to_string(&path)
        .ok()
        .and_then(|t| t.trim().parse().ok())
        .unwrap_or(0.0);
    if !trained {
        return before;
    }
    let total = before + elapsed;
    fs::write(&path, format!("{total}\n")).unwrap();
    total
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn jitter(model: &mut DeepSetModel, rng: &mut Rng, scale: f64) {
    for t in model.params_mut().tensors_mut() {
        for v in t.data_mut() {
            *v += scale * rng.standard_normal();
        }
    }
}

fn small_config(equiv: AggregationSpec, agg: AggregationSpec, head: OutputHead, width: usize) -> ModelConfig {
    ModelConfig {
        input_dim: 2,
        embed: vec![width, width],
        combine: vec![
            CombineSpec {
                width,
                aggregation: equiv,
            };
            2
        ],
        aggregation: agg,
        process: vec![width],
        head,
        activation: Activation::Tanh,
    }
}

fn invariance() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::new(1);
    let mut worst: f64 = 0.0;
    let mut configs = 0;
    for equiv in AggregationSpec::grid() {
        for agg in AggregationSpec::grid() {
            configs += 1;
            let mut model = DeepSetModel::new(small_config(equiv, agg, OutputHead::Circle, 8), &mut rng).unwrap();
            jitter(&mut model, &mut rng, 0.3);
            for _ in 0..20 {
                let n = 2 + rng.below(30);
                let x = rng.normal(&Shape::new(vec![n, 2]).unwrap(), 0.0, 1.5).unwrap();
                let reference = model.predict(&x).unwrap();
                let mut stacked = Vec::with_capacity(50 * n * 2);
                for _ in 0..50 {
                    stacked.extend_from_slice(x.permute_rows(&rng.permutation(n)).data());
                }
                let y = model.predict(&Tensor::new(vec![50, n, 2], stacked).unwrap()).unwrap();
                for row in y.data().chunks(reference.numel()) {
                    worst = worst.max(max_abs_diff(row, reference.data()));
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-10 && secs < 300.0,
        format!("max |Δ| {worst:.2e} ≤ 1e-10 over {configs} configs × 20 populations × 50 permutations; {secs:.1} s < 300 s"),
    )
}

fn random_point(rng: &mut Rng, dims: &[usize], positive: bool) -> Tensor {
    let mut t = rng.uniform(&Shape::new(dims.to_vec()).unwrap(), 0.3, 2.0).unwrap();
    if !positive {
        for v in t.data_mut() {
            if rng.unit() < 0.5 {
                *v = -*v;
            }
        }
    }
    t
}

/// Distinct values at least 0.1 apart, so selections stay off their kinks.
fn spread_point(rng: &mut Rng, dims: &[usize]) -> Tensor {
    let n: usize = dims.iter().product();
    let mut values: Vec<f64> = (0..n).map(|i| 0.25 * i as f64 - 1.0 + 0.1 * rng.unit()).collect();
    rng.shuffle(&mut values);
    Tensor::new(dims.to_vec(), values).unwrap()
}

fn readout(g: &Graph, y: Var, seed: u64) -> deepset::Result<Var> {
    let w = Rng::new(seed).normal(&g.shape(y), 0.0, 1.0)?;
    g.sum_all(g.mul(y, g.constant(w))?)
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::new(2);
    let mut prim: f64 = 0.0;
    let kinds: Vec<(OpKind, usize, bool)> = vec![
        (OpKind::Matmul, 2, false),
        (OpKind::Add, 2, false),
        (OpKind::Sub, 2, false),
        (OpKind::Mul, 2, false),
        (OpKind::Div, 2, true),
        (OpKind::BroadcastRow(3), 1, false),
        (OpKind::Relu, 1, false),
        (OpKind::Tanh, 1, false),
        (OpKind::Sigmoid, 1, false),
        (OpKind::Exp, 1, false),
        (OpKind::Log, 1, true),
        (OpKind::Softplus, 1, false),
        (OpKind::Concat(1), 2, false),
        (
            OpKind::Slice {
                axis: 1,
                start: 1,
                end: 3,
            },
            1,
            false,
        ),
        (OpKind::ReduceSum(0), 1, false),
        (OpKind::ReduceMean(1), 1, false),
        (OpKind::ReduceMax(1), 1, false),
        (OpKind::LogSumExp(0), 1, false),
        (OpKind::Softmax(1), 1, false),
        (
            OpKind::SortSelect {
                axis: 0,
                percentile: 0.4,
            },
            1,
            false,
        ),
    ];
    for (kind, arity, positive) in &kinds {
        for trial in 0..10 {
            let selection = matches!(kind, OpKind::ReduceMax(_) | OpKind::SortSelect { .. });
            let x = if selection {
                spread_point(&mut rng, &[3, 4])
            } else {
                random_point(&mut rng, &[3, 4], *positive)
            };
            let other = random_point(&mut rng, &[3, 4], *positive);
            let rhs = random_point(&mut rng, &[4, 2], false);
            let f = |g: &Graph, v: Var| {
                let inputs = match (arity, kind) {
                    (2, OpKind::Matmul) => vec![v, g.constant(rhs.clone())],
                    (2, _) => vec![v, g.constant(other.clone())],
                    _ => vec![v],
                };
                readout(g, g.apply(*kind, &inputs)?, trial)
            };
            prim = prim.max(grad_check(f, &x, 1e-5).unwrap());
        }
    }
    for _ in 0..10 {
        let a = random_point(&mut rng, &[3, 4], false);
        let b = random_point(&mut rng, &[4, 2], false);
        let d = random_point(&mut rng, &[3, 4], true);
        let pos = random_point(&mut rng, &[6], true);
        let e = random_point(&mut rng, &[2, 3, 4], false);
        let q = random_point(&mut rng, &[2, 4], false);
        let w = random_point(&mut rng, &[2, 3], true);
        let bias = random_point(&mut rng, &[4], false);
        type Check<'a> = (Box<dyn Fn(&Graph, Var) -> deepset::Result<Var> + 'a>, &'a Tensor);
        let checks: Vec<Check> = vec![
            (Box::new(|g, v| readout(g, g.matmul(g.constant(a.clone()), v)?, 1)), &b),
            (Box::new(|g, v| readout(g, g.div(g.constant(a.clone()), v)?, 2)), &d),
            (Box::new(|g, v| readout(g, g.ln_gamma(v), 3)), &pos),
            (Box::new(|g, v| readout(g, g.row_dot(v, g.constant(q.clone()))?, 4)), &e),
            (Box::new(|g, v| readout(g, g.row_dot(g.constant(e.clone()), v)?, 5)), &q),
            (
                Box::new(|g, v| readout(g, g.scale_rows(g.constant(e.clone()), v)?, 6)),
                &w,
            ),
            (
                Box::new(|g, v| readout(g, g.scale_rows(v, g.constant(w.clone()))?, 7)),
                &e,
            ),
            (
                Box::new(|g, v| readout(g, g.add_row(g.constant(e.clone()), v)?, 8)),
                &bias,
            ),
            (
                Box::new(|g, v| readout(g, g.add_row(v, g.constant(bias.clone()))?, 9)),
                &e,
            ),
        ];
        for (f, x) in &checks {
            prim = prim.max(grad_check(f, x, 1e-5).unwrap());
        }
    }

    let mut loss_err: f64 = 0.0;
    for _ in 0..10 {
        let targets: Vec<Circle> = (0..4)
            .map(|_| {
                Circle::new(
                    [rng.uniform_in(-3.0, 3.0), rng.uniform_in(-3.0, 3.0)],
                    rng.uniform_in(0.1, 4.0),
                )
            })
            .collect();
        let pred = random_point(&mut rng, &[4, 3], false);
        loss_err = loss_err.max(grad_check(|g, p| circle_loss(g, p, &targets), &pred, 1e-5).unwrap());
        let weights: Vec<f64> = (0..4).map(|_| rng.uniform_in(0.05, 0.5)).collect();
        let conc = random_point(&mut rng, &[4, 2], true);
        loss_err = loss_err.max(grad_check(|g, p| mixture_loss(g, p, &weights), &conc, 1e-5).unwrap());
    }

    let mut model_err: f64 = 0.0;
    for reduce in [
        SimpleAggregation::Sum,
        SimpleAggregation::Mean,
        SimpleAggregation::LogSumExp,
    ] {
        for spec in [
            AggregationSpec::simple(reduce),
            AggregationSpec::query(reduce),
            AggregationSpec::recurrent(reduce),
        ] {
            let mut model = DeepSetModel::new(small_config(spec, spec, OutputHead::Circle, 5), &mut rng).unwrap();
            jitter(&mut model, &mut rng, 0.3);
            let x = rng.normal(&Shape::new(vec![6, 2]).unwrap(), 0.0, 1.0).unwrap();
            let target = [Circle::new([0.2, -0.4], 1.3)];
            let ids: Vec<_> = model.params().ids().collect();
            for id in ids {
                let at = model.params().get(id).clone();
                let f = |g: &Graph, w: Var| {
                    let p = model.params().bind_frozen(g).replaced(id, w);
                    circle_loss(g, model.forward(g, &p, g.constant(x.clone()))?, &target)
                };
                model_err = model_err.max(grad_check(f, &at, 1e-5).unwrap());
            }
            let f = |g: &Graph, v: Var| {
                let p = model.params().bind_frozen(g);
                circle_loss(g, model.forward(g, &p, v)?, &target)
            };
            model_err = model_err.max(grad_check(f, &x, 1e-5).unwrap());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        prim <= 1e-4 && loss_err <= 1e-6 && model_err <= 1e-4 && secs < 300.0,
        format!(
            "primitives {prim:.1e} ≤ 1e-4, loss heads {loss_err:.1e} ≤ 1e-6, full models (sum/mean/lse × simple/query/recurrent) {model_err:.1e} ≤ 1e-4; {secs:.1} s < 300 s"
        ),
    )
}

fn close_circles(a: &Circle, b: &Circle, tol: f64) -> bool {
    max_abs_diff(&a.to_vec(), &b.to_vec()) <= tol
}

/// Contains every point, and is the minimal circle of at most three of
/// the points on its boundary.
fn supported_by_boundary(c: &Circle, pts: &[[f64; 2]]) -> bool {
    let tol = 1e-9 * (1.0 + c.radius);
    if pts.iter().any(|p| c.distance_to(*p) > c.radius + tol) {
        return false;
    }
    let boundary: Vec<[f64; 2]> = pts
        .iter()
        .copied()
        .filter(|p| (c.distance_to(*p) - c.radius).abs() <= tol)
        .collect();
    let m = boundary.len();
    for i in 0..m {
        for j in i + 1..m {
            if close_circles(&Circle::diameter(boundary[i], boundary[j]), c, 1e-8) {
                return true;
            }
            for k in j + 1..m {
                let s = [boundary[i], boundary[j], boundary[k]];
                if close_circles(&brute_force_min_circle(&s).unwrap(), c, 1e-8) {
                    return true;
                }
            }
        }
    }
    false
}

fn min_circle() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::new(3);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let n = 1 + rng.below(12);
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.uniform_in(-5.0, 5.0), rng.uniform_in(-5.0, 5.0)])
            .collect();
        let a = welzl_min_circle(&pts).unwrap();
        let b = brute_force_min_circle(&pts).unwrap();
        worst = worst.max(max_abs_diff(&a.to_vec(), &b.to_vec()));
    }
    let mut bad = 0;
    for _ in 0..500 {
        let pts: Vec<[f64; 2]> = (0..200)
            .map(|_| [3.0 * rng.standard_normal(), rng.uniform_in(-4.0, 4.0)])
            .collect();
        if !supported_by_boundary(&welzl_min_circle(&pts).unwrap(), &pts) {
            bad += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-9 && bad == 0 && secs < 60.0,
        format!("brute force gap {worst:.1e} ≤ 1e-9 on 500 instances; {bad} of 500 n = 200 instances violate containment or 3-point support; {secs:.1} s < 60 s"),
    )
}

fn lse_profile() -> Outcome {
    let mut rng = Rng::new(4);
    let scales = [1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0];
    let (mut max_ok, mut sharp_ok, mut linear_ok, mut dup_err) = (true, true, true, 0.0f64);
    for _ in 0..100 {
        let n = 2 + rng.below(40);
        let k = 3;
        let mut cols = vec![Vec::new(); k];
        for col in &mut cols {
            let mut v = 0.0;
            for _ in 0..n {
                v += 0.1 + rng.unit();
                col.push(v - 0.5 * n as f64);
            }
            rng.shuffle(col);
        }
        let rows: Vec<Vec<f64>> = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        let x = Tensor::from_rows(&rows).unwrap();
        let ln_n = (n as f64).ln();
        for row in interpolation_profile(&x, &scales).unwrap() {
            max_ok &= row.gap_to_max <= ln_n;
            if row.scale == 100.0 {
                sharp_ok &= row.gap_to_max <= 0.01 * ln_n;
            }
            if row.scale <= 0.01 {
                linear_ok &= row.gap_to_linear <= 10.0 * row.scale * row.scale * n as f64;
            }
        }
        let doubled: Vec<Vec<f64>> = rows.iter().chain(&rows).cloned().collect();
        let g = Graph::new();
        let lse = |t: Tensor| g.value(g.logsumexp(g.constant(t), 0).unwrap());
        let a = lse(x.clone());
        let b = lse(Tensor::from_rows(&doubled).unwrap());
        for (u, v) in a.data().iter().zip(b.data()) {
            dup_err = dup_err.max((v - u - 2f64.ln()).abs());
        }
    }
    outcome(
        max_ok && sharp_ok && linear_ok && dup_err <= 1e-10,
        format!(
            "gap to max ≤ ln n: {max_ok}; ≤ 0.01 ln n at s = 100: {sharp_ok}; linear gap ≤ 10 s² n for s ≤ 0.01: {linear_ok}; duplication shift error {dup_err:.1e} ≤ 1e-10"
        ),
    )
}

fn circle_experiment() -> Outcome {
    let start = Instant::now();
    let base = TrainConfig::circle(
        AggregationSpec::simple(SimpleAggregation::Mean),
        AggregationSpec::simple(SimpleAggregation::Mean),
        2024,
    );
    let grid = Grid::recurrence_table(SimpleAggregation::Mean, 5);
    let dir = cache_dir().join("circle");
    let cached = grid
        .configs(&base)
        .iter()
        .filter(|c| record_path(&dir.join("records"), c).exists())
        .count();
    let options = GridOptions {
        out_dir: Some(dir),
        workers: 0,
        train: TrainOptions {
            timing: false,
            progress_every: 5000,
        },
    };
    let records = run_grid(&base, &grid, &options).unwrap();
    let mut worst_ratio = f64::INFINITY;
    let mut not_ok = 0;
    for r in &records {
        match (
            r.status.is_ok(),
            r.metric(metric::BEST_MSE),
            r.metric(metric::BASELINE_MSE),
        ) {
            (true, Some(mse), Some(baseline)) => worst_ratio = worst_ratio.min(baseline / mse),
            _ => not_ok += 1,
        }
    }
    let rows = bootstrap_table(&records, metric::BEST_MSE, GroupBy::Recurrence, 5, 10_000, &Rng::new(5)).unwrap();
    let peak = |label: String| {
        rows.iter()
            .find(|r| r.group == label)
            .map_or(f64::NAN, |r| r.median_best)
    };
    let neither = peak(recurrence_label(false, false));
    let both = peak(recurrence_label(true, true));
    let summary: Vec<String> = rows
        .iter()
        .map(|r| format!("{} {:.4}", r.group, r.median_best))
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let total = training_seconds("circle", cached < records.len(), secs);
    outcome(
        not_ok == 0 && worst_ratio >= 5.0 && both <= neither && total <= 4.0 * 3600.0,
        format!(
            "{} runs ({cached} from cache), {not_ok} not ok; weakest baseline/MSE ratio {worst_ratio:.1} ≥ 5; median best MSE both-recurrent {both:.4} ≤ neither {neither:.4} [{}]; training {total:.0} s ≤ 14400 s",
            records.len(),
            summary.join(", ")
        ),
    )
}

fn mixture_experiment() -> Outcome {
    let start = Instant::now();
    let config = TrainConfig::mixture(
        AggregationSpec::simple(SimpleAggregation::Mean),
        AggregationSpec::recurrent(SimpleAggregation::Sum),
        2024,
    );
    let dir = cache_dir().join("mixture");
    fs::create_dir_all(&dir).unwrap();
    let (model_path, config_path) = (dir.join("model.bin"), dir.join("config.toml"));
    let cached = fs::read_to_string(&config_path)
        .ok()
        .and_then(|t| TrainConfig::from_toml(&t).ok());
    let mut trained = false;
    let model = match (cached, DeepSetModel::load(&model_path)) {
        (Some(c), Ok(m)) if c == config => m,
        _ => {
            let options = TrainOptions {
                timing: false,
                progress_every: 5000,
            };
            let (model, record) = train_with(&config, &options).unwrap();
            assert!(record.status.is_ok(), "mixture training: {}", record.status);
            model.save(&model_path).unwrap();
            fs::write(&config_path, config.to_toml()).unwrap();
            trained = true;
            model
        }
    };
    let rng = Rng::new(6);
    let mother = Mother::sample(TaskKind::Mixture, &mut rng.child("mother"), MOTHER_SIZE).unwrap();
    let Target::Mixture(truth) = mother.target else {
        unreachable!()
    };
    let sweep = sweep_population(&model, &mother, &SWEEP_SIZES, 100, &rng).unwrap();
    let first = sweep.summaries.first().unwrap();
    let last = sweep.summaries.last().unwrap();
    let inversions = sweep.width_inversions();
    let widths: Vec<String> = sweep
        .summaries
        .iter()
        .map(|s| format!("{:.3}", s.estimate.width90()))
        .collect();
    let cmp = em_comparison(&model, &mother, &SWEEP_SIZES, &rng.child("em")).unwrap();
    let mut bad_rows = Vec::new();
    for row in &cmp.rows {
        let degenerate = row.status.to_string().contains("degenerate kde");
        let finite = row.log_ratio.is_some_and(f64::is_finite);
        if !(finite || degenerate) {
            bad_rows.push(format!("n = {}: {}", row.n, row.status));
        }
    }
    let ratios: Vec<String> = cmp
        .rows
        .iter()
        .map(|r| r.log_ratio.map_or("-".into(), |x| format!("{x:+.2}")))
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let total = training_seconds("mixture", trained, secs);
    outcome(
        last.error.p50 <= first.error.p50 && inversions <= 1 && bad_rows.is_empty() && total <= 2.0 * 3600.0,
        format!(
            "model {}; true weight {truth:.3}; median |error| n = 1000 {:.4} ≤ n = 10 {:.4}; 90% widths [{}] with {inversions} inversion(s) ≤ 1; EM log ratios [{}] {}; training and evaluation {total:.0} s ≤ 7200 s",
            if trained { "trained" } else { "from cache" },
            last.error.p50,
            first.error.p50,
            widths.join(", "),
            ratios.join(", "),
            if bad_rows.is_empty() { "all finite".to_string() } else { bad_rows.join("; ") }
        ),
    )
}

fn cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_deepset"))
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

/// Every file under `dir`, relative path and bytes, sorted.
fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let run = |tag: &str| -> Option<Vec<(PathBuf, Vec<u8>)>> {
        let root = tmp.path().join(tag);
        let p = |s: &str| root.join(s).to_string_lossy().into_owned();
        let small = [
            "--steps",
            "20",
            "--width",
            "8",
            "--batch",
            "4",
            "--eval-populations",
            "20",
        ];
        let mut ok = cli(&[
            "gen-data",
            "--task",
            "mixture",
            "--count",
            "5",
            "--seed",
            "1",
            "--out-dir",
            &p("data"),
        ]);
        let mut train = vec![
            "train",
            "--task",
            "circle",
            "--equivariant",
            "r-mean",
            "--aggregation",
            "q-lse",
        ];
        train.extend(small);
        train.extend(["--seed", "2", "--out-dir"]);
        ok &= cli(&[&train[..], &[&p("circle")]].concat());
        let mut train = vec!["train", "--task", "mixture", "--aggregation", "r-sum", "--n-max", "30"];
        train.extend(small);
        train.extend(["--seed", "3", "--out-dir"]);
        ok &= cli(&[&train[..], &[&p("mixture")]].concat());
        let mut grid = vec![
            "grid",
            "--task",
            "circle",
            "--table",
            "lse",
            "--repeats",
            "2",
            "--workers",
            "2",
        ];
        grid.extend(small);
        grid.extend(["--seed", "4", "--out-dir"]);
        ok &= cli(&[&grid[..], &[&p("grid")]].concat());
        let model = p("mixture/model.bin");
        ok &= cli(&[
            "sweep",
            "--model",
            &model,
            "--sizes",
            "10,50",
            "--resamples",
            "10",
            "--seed",
            "5",
            "--out-dir",
            &p("sweep"),
        ]);
        ok &= cli(&[
            "compare-em",
            "--model",
            &model,
            "--sizes",
            "20,40",
            "--estimates",
            "10",
            "--seed",
            "6",
            "--out-dir",
            &p("em"),
        ]);
        ok &= cli(&[
            "bootstrap",
            "--records",
            &p("grid"),
            "--resamples",
            "500",
            "--seed",
            "7",
            "--out-dir",
            &p("boot"),
        ]);
        ok &= cli(&[
            "report",
            "--records",
            &p("grid"),
            "--seed",
            "8",
            "--out-dir",
            &p("report"),
        ]);
        ok.then(|| snapshot(&root))
    };
    let (a, b) = (run("a"), run("b"));
    match (a, b) {
        (Some(a), Some(b)) => {
            let differing: Vec<String> = a
                .iter()
                .zip(&b)
                .filter(|(x, y)| x != y)
                .map(|(x, _)| x.0.display().to_string())
                .collect();
            let same = a.len() == b.len() && differing.is_empty();
            outcome(
                same,
                format!(
                    "{} files from gen-data, train, grid, sweep, compare-em, bootstrap and report; {} differ between identical invocations",
                    a.len(),
                    if a.len() == b.len() { differing.len() } else { a.len().abs_diff(b.len()) }
                ),
            )
        }
        _ => outcome(false, "a CLI invocation exited with a non-zero status".into()),
    }
}

fn out_of_scope() -> Outcome {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).parent().unwrap();
    let banned = [["mn", "ist"].concat(), ["model", "net"].concat()];
    let mut hits = Vec::new();
    let mut files = 0;
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            files += 1;
            let name = path.to_string_lossy().to_lowercase();
            let text = fs::read_to_string(&path).unwrap_or_default().to_lowercase();
            if banned
                .iter()
                .any(|b| name.contains(b.as_str()) || text.contains(b.as_str()))
            {
                hits.push(path.strip_prefix(root).unwrap().display().to_string());
            }
        }
    }
    outcome(
        hits.is_empty(),
        format!("{files} files scanned for point-cloud or digit dataset loaders; matches: {hits:?}"),
    )
}
