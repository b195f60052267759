//! Continual-learning metrics over evaluation logs.

pub mod bootstrap;
pub mod cl;
pub mod log;
pub mod summary;
pub mod transfer;

pub use bootstrap::{bootstrap_ci, seed_interval, DEFAULT_RESAMPLES};
pub use cl::{
    average_performance, backward_transfer, forgetting, forward_transfer, mean_over_tasks, TrainingCurve,
    SMOOTHING_WINDOW,
};
pub use log::{parse_jsonl, to_jsonl, EvalRecord, PerformanceLog};
pub use summary::{load_run, reference_curves, summarize, to_csv, Estimate, LoadedRun, SummaryRow, CI_LEVEL};
pub use transfer::{build_transfer_matrix, reference_transfer, TransferMatrix, TransferMatrixRun};
