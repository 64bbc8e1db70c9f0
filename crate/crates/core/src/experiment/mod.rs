//! Scenario-driven experiments: plant simulation, filter replay, scoring and logs.

mod metrics;
mod output;
mod run;
mod scenario;

pub use metrics::{median_after_warmup, normalize_metrics, relative_error, relative_error_series, rmse, STATE_NAMES, TIMING_WARMUP};
pub use output::{
    estimate_file_name, read_estimate_csv, read_report, write_estimate_csv, write_metrics_csv, write_outputs, EstimateRow,
    MetricRow, Report, TimingRow,
};
pub use run::{calibrate, replay, run_experiment, score, simulate, ExperimentOutput, FilterFailure, FilterMetrics, FilterRun};
pub use scenario::{
    CalibrationSection, CellSection, DriveSection, FilterKind, InitialSection, Scenario, SwitchEvent, SCHEMA,
};
