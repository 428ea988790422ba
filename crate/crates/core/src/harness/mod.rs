//! Ingestion, dataset-level evaluation, threshold sweeps and reports.

pub mod eval;
pub mod io;
pub mod report;
pub mod sweep;

pub use eval::{evaluate, evaluate_matched, sweep_thresholds, Dataset, EvalConfig, MatchedDataset};
pub use io::{parse_ground_truth, parse_predictions, write_ground_truth, write_predictions};
pub use report::{emit_report, DatasetCounts, EvalReport, ReportFormat};
pub use sweep::{ScorePopulations, SweepPoint, SweepResult};
