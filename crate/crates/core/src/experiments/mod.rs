//! Configuration grid, sweeps, main-effects ANOVA and reports.

mod anova;
mod config;
mod report;
mod sweep;

pub use anova::{f_upper_tail, factorial_anova, AnovaResult, Cell, Factor, FactorEffect};
pub use config::{full_grid, Clients, ProviderRoster, RunConfig, Thresholds};
pub use report::{emit_report, fmt3, render_markdown, ReportFiles};
pub use sweep::{
    anova_cells, evaluate_config, prepare_inputs, read_results, run_sweep, write_results, ConfigEvaluation, PreparedInputs, RowStatus, SweepInputs,
    SweepOptions, SweepOutcome, SweepResult, METRIC_COLUMNS, RESULTS_HEADER,
};
