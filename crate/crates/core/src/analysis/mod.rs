//! Batch statistics over trial traces and principal kurtosis analysis.

mod kurtosis;
pub(crate) mod stats;

pub use kurtosis::{kurtosis_matrix, select_grid_axis, KurtosisReport};
pub use stats::{
    cell_count_percentiles, median, median_error_curve, nearest_rank, quantile_error_curve, CellPercentiles,
    RunSummary,
};
