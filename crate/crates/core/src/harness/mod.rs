//! Experiment orchestration and analysis: config grids, bootstrap peak
//! performance, population-size sweeps and the EM comparison.

mod em;
mod grid;
mod record;
pub mod report;
mod stats;
mod sweep;

pub use em::{em_comparison, em_comparison_with, kde_log_ratio, EmComparison, EmRow, ESTIMATES_PER_SIZE};
pub use grid::{
    derive_seed, failed_record, load_records, record_path, run_configs, run_grid, Grid, GridOptions, DEFAULT_REPEATS,
};
pub use record::{metric, ExperimentRecord, LossPoint, Status};
pub use stats::{
    bootstrap_peak, bootstrap_table, median, quantile_sorted, recurrence_label, BootstrapRow, GroupBy, Percentiles,
};
pub use sweep::{
    mixture_estimate, population_sweep, predict_all, subsample, sweep_population, Mother, SizeSummary, SweepResult,
    MOTHER_SIZE, SWEEP_SIZES,
};
