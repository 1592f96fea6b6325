use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use deepset::aggregation::SimpleAggregation;
use deepset::harness::{
    bootstrap_table, em_comparison_with, load_records, metric, report, run_grid, sweep_population, Grid, GridOptions,
    GroupBy, Mother, DEFAULT_REPEATS, ESTIMATES_PER_SIZE, MOTHER_SIZE, SWEEP_SIZES,
};
use deepset::model::{AggregationSpec, DeepSetModel, OutputHead};
use deepset::tasks::{dataset, TaskKind};
use deepset::training::{train_with, TrainConfig, TrainOptions};
use deepset::{Result, Rng};

/// Deep set experiments: data, training, grids and their analyses.
#[derive(Parser)]
#[command(name = "deepset", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a fixed dataset as JSON lines.
    GenData {
        #[arg(long)]
        task: TaskKind,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        /// Population size; 20 for circles and 100 for mixtures by default.
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        out: Output,
    },
    /// Train one model and evaluate it on held-out populations.
    Train {
        #[command(flatten)]
        train: TrainArgs,
        /// Record wall-clock seconds; outputs are then no longer reproducible.
        #[arg(long)]
        timing: bool,
        #[command(flatten)]
        out: Output,
    },
    /// Train every aggregation pairing of a grid several times.
    Grid {
        #[command(flatten)]
        train: TrainArgs,
        /// Explicit `equivariant:final` pairs, comma separated.
        #[arg(long, value_delimiter = ',', conflicts_with = "table")]
        cells: Vec<String>,
        /// Simple and recurrent variants of one base aggregation.
        #[arg(long)]
        table: Option<SimpleAggregation>,
        #[arg(long, default_value_t = DEFAULT_REPEATS)]
        repeats: usize,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long)]
        timing: bool,
        #[command(flatten)]
        out: Output,
    },
    /// Estimates of a trained model on subsamples of growing size.
    Sweep {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',', default_values_t = SWEEP_SIZES)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        resamples: usize,
        #[command(flatten)]
        out: Output,
    },
    /// KDE score of the true mixture weight, model against EM.
    CompareEm {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',', default_values_t = SWEEP_SIZES)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = ESTIMATES_PER_SIZE)]
        estimates: usize,
        #[command(flatten)]
        out: Output,
    },
    /// Median best result over resampled batches of grid runs.
    Bootstrap {
        /// Output directory of a `grid` run.
        #[arg(long)]
        records: PathBuf,
        #[arg(long, default_value = metric::BEST_MSE)]
        metric: String,
        #[arg(long, default_value = "recurrence")]
        group_by: GroupBy,
        #[arg(long, default_value_t = 5)]
        batch: usize,
        #[arg(long, default_value_t = 10_000)]
        resamples: usize,
        #[command(flatten)]
        out: Output,
    },
    /// Collect the records of a grid directory into one CSV/JSON pair.
    Report {
        #[arg(long)]
        records: PathBuf,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Args)]
struct Output {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ModelArgs {
    /// Parameter blob written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Inferred from the output head when omitted.
    #[arg(long)]
    task: Option<TaskKind>,
}

/// Overrides applied on top of `--config` or the task defaults.
#[derive(Args)]
struct TrainArgs {
    /// TOML training config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<TaskKind>,
    #[arg(long)]
    equivariant: Option<AggregationSpec>,
    #[arg(long)]
    aggregation: Option<AggregationSpec>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    n_min: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    log_every: Option<usize>,
    #[arg(long)]
    eval_populations: Option<usize>,
    #[arg(long)]
    eval_n: Option<usize>,
    /// Print the loss to stderr every this many steps.
    #[arg(long, default_value_t = 0)]
    progress: usize,
}

impl TrainArgs {
    fn build(&self, seed: u64) -> Result<TrainConfig> {
        let mut c = match (&self.config, self.task) {
            (Some(path), _) => TrainConfig::load(path)?,
            (None, Some(task)) => TrainConfig::for_task(task, seed),
            (None, None) => return Err(deepset::Error::InvalidConfig("pass --config or --task".into())),
        };
        if let Some(task) = self.task {
            if task != c.task {
                c = TrainConfig {
                    equivariant: c.equivariant,
                    aggregation: c.aggregation,
                    ..TrainConfig::for_task(task, seed)
                };
            }
        }
        c.seed = seed;
        macro_rules! set {
            ($($field:ident),*) => {$(if let Some(v) = self.$field { c.$field = v; })*};
        }
        set!(
            equivariant,
            aggregation,
            steps,
            n_min,
            n_max,
            learning_rate,
            batch,
            width,
            clip_norm,
            log_every,
            eval_populations
        );
        if self.eval_n.is_some() {
            c.eval_n = self.eval_n;
        }
        c.validate()?;
        Ok(c)
    }

    fn options(&self, timing: bool) -> TrainOptions {
        TrainOptions {
            timing,
            progress_every: self.progress,
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// `Ok(false)` when some cell finished without an OK status.
fn run(command: Command) -> Result<bool> {
    match command {
        Command::GenData { task, count, n, out } => {
            let n = n.unwrap_or(match task {
                TaskKind::Circle => deepset::tasks::CIRCLE_TRAIN_SIZE,
                TaskKind::Mixture => deepset::tasks::MIXTURE_EVAL_SIZE,
            });
            let records = dataset::generate(task, count, n, &Rng::new(out.seed))?;
            let path = create(&out.out_dir)?.join(format!("{task}.jsonl"));
            dataset::write_jsonl(&path, &records)?;
            println!("{}", path.display());
            Ok(true)
        }
        Command::Train { train, timing, out } => {
            let config = train.build(out.seed)?;
            let dir = create(&out.out_dir)?;
            let (model, record) = train_with(&config, &train.options(timing))?;
            write_text(&dir.join("config.toml"), &config.to_toml())?;
            model.save(&dir.join("model.bin"))?;
            let written = report::write_records(&dir, "train", std::slice::from_ref(&record))?;
            println!("{} {}", record.run_id, record.status);
            for (k, v) in &record.metrics {
                println!("  {k} = {v}");
            }
            println!("{}", written.csv.display());
            Ok(record.status.is_ok())
        }
        Command::Grid {
            train,
            cells,
            table,
            repeats,
            workers,
            timing,
            out,
        } => {
            let base = train.build(out.seed)?;
            let grid = match table {
                Some(reduce) => Grid::recurrence_table(reduce, repeats),
                None if cells.is_empty() => Grid::cross(&AggregationSpec::grid(), &AggregationSpec::grid(), repeats),
                None => Grid::new(cells.iter().map(|c| parse_cell(c)).collect::<Result<_>>()?, repeats),
            };
            let options = GridOptions {
                out_dir: Some(create(&out.out_dir)?),
                workers,
                train: train.options(timing),
            };
            let records = run_grid(&base, &grid, &options)?;
            let written = report::write_records(&out.out_dir, "grid", &records)?;
            let failed = records.iter().filter(|r| !r.status.is_ok()).count();
            println!("{} runs, {failed} not ok; {}", records.len(), written.csv.display());
            Ok(failed == 0)
        }
        Command::Sweep {
            model,
            sizes,
            resamples,
            out,
        } => {
            let (net, task) = model.load()?;
            let rng = Rng::new(out.seed);
            let mother = Mother::sample(task, &mut rng.child("mother"), MOTHER_SIZE)?;
            let sweep = sweep_population(&net, &mother, &sizes, resamples, &rng)?;
            let written = report::write_sweep(&create(&out.out_dir)?, "sweep", &sweep)?;
            println!("{}", written.csv.display());
            Ok(true)
        }
        Command::CompareEm {
            model,
            sizes,
            estimates,
            out,
        } => {
            let (net, task) = model.load()?;
            if task != TaskKind::Mixture {
                return Err(deepset::Error::InvalidConfig("compare-em needs a mixture model".into()));
            }
            let rng = Rng::new(out.seed);
            let mother = Mother::sample(task, &mut rng.child("mother"), MOTHER_SIZE)?;
            let cmp = em_comparison_with(&net, &mother, &sizes, estimates, &rng)?;
            let written = report::write_em(&create(&out.out_dir)?, "em", &cmp)?;
            for row in &cmp.rows {
                match row.log_ratio {
                    Some(r) => println!("n = {:>5}: model − EM log ratio {r:+.4}", row.n),
                    None => println!("n = {:>5}: {}", row.n, row.status),
                }
            }
            println!("{}", written.csv.display());
            Ok(cmp.rows.iter().all(|r| r.status.is_ok()))
        }
        Command::Bootstrap {
            records,
            metric,
            group_by,
            batch,
            resamples,
            out,
        } => {
            let records = load_records(&records)?;
            let rows = bootstrap_table(&records, &metric, group_by, batch, resamples, &Rng::new(out.seed))?;
            let written = report::write_bootstrap(&create(&out.out_dir)?, "bootstrap", &rows)?;
            for r in &rows {
                println!("{:<40} runs {:>3}  median best {:.5}", r.group, r.runs, r.median_best);
            }
            println!("{}", written.csv.display());
            Ok(true)
        }
        Command::Report { records, out } => {
            let _ = out.seed;
            let records = load_records(&records)?;
            let written = report::write_records(&create(&out.out_dir)?, "report", &records)?;
            println!("{}", written.csv.display());
            Ok(records.iter().all(|r| r.status.is_ok()))
        }
    }
}

impl ModelArgs {
    fn load(&self) -> Result<(DeepSetModel, TaskKind)> {
        let model = DeepSetModel::load(&self.model)?;
        let task = match (self.task, model.config().head) {
            (Some(t), _) => t,
            (None, OutputHead::Circle) => TaskKind::Circle,
            (None, OutputHead::Beta) => TaskKind::Mixture,
            (None, _) => return Err(deepset::Error::InvalidConfig("pass --task for this model".into())),
        };
        Ok((model, task))
    }
}

fn parse_cell(cell: &str) -> Result<(AggregationSpec, AggregationSpec)> {
    let (e, f) = cell
        .split_once(':')
        .ok_or_else(|| deepset::Error::InvalidConfig(format!("cell `{cell}` is not `equivariant:final`")))?;
    Ok((e.parse()?, f.parse()?))
}

fn create(dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| deepset::Error::io(dir, e))?;
    Ok(dir.to_path_buf())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| deepset::Error::io(path, e))
}
