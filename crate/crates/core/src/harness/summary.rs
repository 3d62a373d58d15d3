use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::EstimatorKind;
use crate::harness::runner::TrialResult;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
}

/// Quantile `q` of sorted data, interpolating linearly between ranks.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantiles(values: &[f64]) -> Result<Quantiles> {
    if values.is_empty() {
        return Err(Error::Data("no values to summarize".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(Quantiles {
        median: quantile_sorted(&v, 0.5),
        p10: quantile_sorted(&v, 0.1),
        p90: quantile_sorted(&v, 0.9),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: EstimatorKind,
    pub completed: usize,
    pub failed: usize,
    /// `None` when every trial failed.
    pub max_sq: Option<Quantiles>,
    pub mse: Option<Quantiles>,
    pub max_sq_normalized: Option<Quantiles>,
    pub mse_normalized: Option<Quantiles>,
}

/// Median and [10, 90] percentiles per estimator, in first-seen order.
pub fn summarize(results: &[TrialResult]) -> Result<Vec<EstimatorSummary>> {
    if results.is_empty() {
        return Err(Error::Data("no trial results".into()));
    }
    let mut kinds: Vec<EstimatorKind> = Vec::new();
    for r in results {
        if !kinds.contains(&r.estimator) {
            kinds.push(r.estimator);
        }
    }
    kinds
        .into_iter()
        .map(|kind| {
            let rows: Vec<&TrialResult> = results.iter().filter(|r| r.estimator == kind).collect();
            let q = |f: fn(&TrialResult) -> Option<f64>| -> Option<Quantiles> {
                let vals: Vec<f64> = rows.iter().filter_map(|r| f(r)).collect();
                quantiles(&vals).ok()
            };
            let completed = rows.iter().filter(|r| r.is_ok()).count();
            Ok(EstimatorSummary {
                estimator: kind,
                completed,
                failed: rows.len() - completed,
                max_sq: q(|r| r.max_sq),
                mse: q(|r| r.mse),
                max_sq_normalized: q(|r| r.max_sq_normalized),
                mse_normalized: q(|r| r.mse_normalized),
            })
        })
        .collect()
}

/// The summary for one estimator, if it was run.
pub fn summary_for(summaries: &[EstimatorSummary], kind: EstimatorKind) -> Option<&EstimatorSummary> {
    summaries.iter().find(|s| s.estimator == kind)
}
