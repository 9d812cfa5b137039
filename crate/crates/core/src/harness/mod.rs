//! Experiment orchestration: sweeps over a family of demand curves,
//! forecast-error statistics, empirical PAC certification and result files.
//!
//! Every random stream is derived from the master seed and the position of
//! the work item, and results are gathered in sweep order, so outputs do not
//! depend on the number of worker threads.

pub mod check;
pub mod config;
pub mod output;
pub mod pac;
pub mod stats;
pub mod sweep;

pub use check::{run_checks, CheckOutcome};
pub use config::{BaselineSpec, CheckSpec, FamilySpec, LinearSpec, PacSpec, Radius, SweepConfig};
pub use output::{emit_results, read_summary, summarize_sweep, write_sweep_csv, Summary};
pub use pac::{pac_certify, PacCertificate};
pub use stats::{summarize, ErrorStats, HistogramBin};
pub use sweep::{run_sweep, RunOptions, SweepRecord, SweepResult};
