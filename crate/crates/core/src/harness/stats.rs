use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    /// An integer multiple of the bin width.
    pub center: f64,
    pub count: u64,
}

/// Location, spread and histogram of forecast errors across a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
    pub n_points: usize,
    pub bin_width: f64,
    /// Nonempty bins in increasing order; counts sum to `n_points`.
    pub histogram: Vec<HistogramBin>,
}

/// Each error is assigned to the bin whose center, a multiple of
/// `bin_width`, is nearest.
pub fn summarize(errors: &[f64], bin_width: f64) -> Result<ErrorStats> {
    if errors.is_empty() {
        return Err(Error::invalid("cannot summarize an empty error list"));
    }
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::invalid(format!(
            "bin width must be positive, got {bin_width}"
        )));
    }
    if let Some(e) = errors.iter().find(|e| !e.is_finite()) {
        return Err(Error::invalid(format!("forecast error {e} is not finite")));
    }
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let variance = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    let mut bins = BTreeMap::<i64, u64>::new();
    for e in errors {
        *bins.entry((e / bin_width).round() as i64).or_default() += 1;
    }
    Ok(ErrorStats {
        mean,
        variance,
        n_points: errors.len(),
        bin_width,
        histogram: bins
            .into_iter()
            .map(|(i, count)| HistogramBin {
                center: i as f64 * bin_width,
                count,
            })
            .collect(),
    })
}
