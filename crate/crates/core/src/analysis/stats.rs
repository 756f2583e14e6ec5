use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::filters::TrialTrace;

/// Median with the two middle values averaged for even counts. NaN sorts last.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Nearest-rank percentile of sorted data: the value at rank `ceil(p n / 100)`.
pub fn nearest_rank<T: Copy>(sorted: &[T], p: f64) -> T {
    assert!(!sorted.is_empty(), "percentile of an empty slice");
    let rank = (p / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn check_rectangular(traces: &[TrialTrace]) -> Result<usize> {
    let Some(first) = traces.first() else {
        return Err(invalid("no traces to aggregate"));
    };
    let len = first.records.len();
    if let Some((i, t)) = traces.iter().enumerate().find(|(_, t)| t.records.len() != len) {
        return Err(invalid(format!(
            "trace {i} has {} records, expected {len}",
            t.records.len()
        )));
    }
    Ok(len)
}

fn column(traces: &[TrialTrace], k: usize, field: impl Fn(&crate::filters::TraceRecord) -> f64) -> Vec<f64> {
    traces.iter().map(|t| field(&t.records[k])).collect()
}

/// Median absolute error across trials at each experiment index.
pub fn median_error_curve(traces: &[TrialTrace]) -> Result<Vec<f64>> {
    let len = check_rectangular(traces)?;
    Ok((0..len).map(|k| median(&mut column(traces, k, |r| r.abs_error))).collect())
}

/// Nearest-rank `p`-th percentile of the absolute error at each experiment index.
pub fn quantile_error_curve(traces: &[TrialTrace], p: f64) -> Result<Vec<f64>> {
    let len = check_rectangular(traces)?;
    Ok((0..len)
        .map(|k| {
            let mut c = column(traces, k, |r| r.abs_error);
            c.sort_by(f64::total_cmp);
            nearest_rank(&c, p)
        })
        .collect())
}

pub(crate) fn median_field_curve(
    traces: &[TrialTrace],
    field: impl Fn(&crate::filters::TraceRecord) -> f64 + Copy,
) -> Result<Vec<f64>> {
    let len = check_rectangular(traces)?;
    Ok((0..len).map(|k| median(&mut column(traces, k, field))).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellPercentiles {
    pub q2_5: f64,
    pub q50: f64,
    pub q97_5: f64,
}

/// 2.5th, 50th and 97.5th nearest-rank percentiles of final cell counts.
pub fn cell_count_percentiles(counts: &[usize]) -> Result<CellPercentiles> {
    if counts.is_empty() {
        return Err(invalid("cell count percentiles need at least one count"));
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    Ok(CellPercentiles {
        q2_5: nearest_rank(&sorted, 2.5) as f64,
        q50: nearest_rank(&sorted, 50.0) as f64,
        q97_5: nearest_rank(&sorted, 97.5) as f64,
    })
}

/// Aggregate of one batch, written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// The resolved run configuration.
    pub config: serde_json::Value,
    pub n_trials: usize,
    /// Trials whose posterior degenerated, with the experiment index of failure.
    pub failures: Vec<(usize, usize)>,
    pub median_error: Vec<f64>,
    pub q25_error: Vec<f64>,
    pub q75_error: Vec<f64>,
    pub median_cell_count: Vec<f64>,
    pub final_cell_counts: Vec<usize>,
    pub percentiles_cells: CellPercentiles,
    /// Hybrid study only.
    pub median_theta_rel_error: Option<Vec<f64>>,
}
