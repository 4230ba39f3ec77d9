//! Experiment driver: workload specs, sweeps, experiments and reports.

mod report;
mod sweep;
mod workload;

pub use report::{
    emit_report, read_grid_csv, read_sweep_csv, recommendation_table, render_heatmap_svg, render_series_table,
    render_table_text, render_text_table, summarize_records, write_grid_csv, write_series_csv, write_sweep_csv, ReportFormat, TableRow,
};
pub use sweep::{
    analytics_count_base, default_blocks, distribution_base, min_max_normalize, pattern_means, population_std,
    recommend, run_analytics_count_experiment, run_distribution_experiment, run_live, run_mode, run_predicted,
    run_sweep, run_sweep_with, CellFailure, GridCell, Mode, RunRecord, SeriesPoint, SweepGrid, SweepResult, SweepSpec,
};
pub use workload::{thread_cap, Distribution, PoolMode, WorkloadSpec, MIB, THREADS_ENV};
