//! Run configuration, parallel trial batches and result files.

mod batch;
mod config;
mod output;

pub use batch::{derive_seed, run_batch, run_trials, run_with_truth, sample_truth, summarize};
pub use config::{RunConfig, Study};
pub use output::{export_snapshots, write_outputs, CURVE_FILE, SUMMARY_FILE, THETA_FILE, TIMING_FILE};
