//! Result files. Floats are written in shortest round-trip form, so reruns
//! with the same configuration and seed are byte-identical.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::SweepConfig;
use super::pac::PacCertificate;
use super::stats::{summarize, ErrorStats};
use super::sweep::{write_file, SkippedPoint, SweepResult};
use crate::error::{Error, Result};

/// Numbers the linear learner remembers plus numbers it reads per period.
pub const LINEAR_COMPLEXITY: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub reports_per_period: usize,
    /// Grid knots plus reports per period.
    pub complexity: usize,
    pub stats: ErrorStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub n_records: usize,
    pub linear_complexity: usize,
    pub linear: ErrorStats,
    pub linear_quantity: ErrorStats,
    pub baseline: Vec<BaselineSummary>,
    pub skipped: Vec<SkippedPoint>,
    pub config: SweepConfig,
}

impl Summary {
    /// Label used in file names: `linear` or `cr_k<K>`.
    pub fn learners(&self) -> Vec<(String, &ErrorStats)> {
        let mut out = vec![("linear".to_string(), &self.linear)];
        out.extend(
            self.baseline
                .iter()
                .map(|b| (format!("cr_k{}", b.reports_per_period), &b.stats)),
        );
        out
    }
}

pub fn summarize_sweep(config: &SweepConfig, result: &SweepResult) -> Result<Summary> {
    if result.records.is_empty() {
        return Err(Error::invalid("sweep produced no records"));
    }
    let bin = config.histogram_bin;
    let linear: Vec<f64> = result
        .records
        .iter()
        .map(|r| r.linear.price_error)
        .collect();
    let linear_q: Vec<f64> = result
        .records
        .iter()
        .map(|r| r.linear.quantity_error)
        .collect();
    let grid_knots = grid_knots(config.baseline.grid_fraction);
    let baseline = config
        .baseline
        .reports_per_period
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let errors: Vec<f64> = result
                .records
                .iter()
                .map(|r| r.baseline[i].price_error)
                .collect();
            Ok(BaselineSummary {
                reports_per_period: k,
                complexity: grid_knots + k,
                stats: summarize(&errors, bin)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Summary {
        seed: config.seed,
        n_records: result.records.len(),
        linear_complexity: LINEAR_COMPLEXITY,
        linear: summarize(&linear, bin)?,
        linear_quantity: summarize(&linear_q, bin)?,
        baseline,
        skipped: result.skipped.clone(),
        config: config.clone(),
    })
}

fn grid_knots(fraction: f64) -> usize {
    (1.0 / fraction - 1e-9).ceil() as usize + 1
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per record; baseline columns follow the configured K order.
pub fn write_sweep_csv<W: Write>(result: &SweepResult, mut out: W) -> std::io::Result<()> {
    let ks: Vec<usize> = result
        .records
        .first()
        .map(|r| r.baseline.iter().map(|b| b.reports_per_period).collect())
        .unwrap_or_default();
    write!(
        out,
        "index,sigma,replication,b_star,q_star,linear_price_error,linear_quantity_error,\
         linear_oracle_quantity_error,linear_projections"
    )?;
    for k in &ks {
        write!(
            out,
            ",cr_k{k}_price_error,cr_k{k}_quantity_error,cr_k{k}_sup_distance"
        )?;
    }
    writeln!(out)?;
    for r in &result.records {
        write!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.index,
            opt(r.sigma),
            r.replication,
            r.b_star,
            r.q_star,
            r.linear.price_error,
            r.linear.quantity_error,
            r.linear.oracle_quantity_error,
            r.linear.projections
        )?;
        for b in &r.baseline {
            write!(
                out,
                ",{},{},{}",
                b.price_error, b.quantity_error, b.sup_distance
            )?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_histogram_csv<W: Write>(stats: &ErrorStats, mut out: W) -> std::io::Result<()> {
    writeln!(out, "bin_center,count")?;
    for bin in &stats.histogram {
        writeln!(out, "{},{}", bin.center, bin.count)?;
    }
    Ok(())
}

/// Writes `sweep.csv`, `summary.json`, one `histogram_<learner>.csv` per
/// learner and, when certificates are given, `pac.json`. Returns the paths
/// written.
pub fn emit_results(
    dir: &Path,
    result: &SweepResult,
    summary: &Summary,
    certificates: &[PacCertificate],
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let path = dir.join("sweep.csv");
    write_file(&path, |w| write_sweep_csv(result, w))?;
    written.push(path);

    let path = dir.join("summary.json");
    write_json(&path, summary)?;
    written.push(path);

    for (label, stats) in summary.learners() {
        let path = dir.join(format!("histogram_{label}.csv"));
        write_file(&path, |w| write_histogram_csv(stats, w))?;
        written.push(path);
    }

    if !certificates.is_empty() {
        let path = dir.join("pac.json");
        write_json(&path, &certificates)?;
        written.push(path);
    }
    Ok(written)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<Summary> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knot_count_matches_grid_construction() {
        use crate::empirical_learner::EmpiricalDistribution;
        for frac in [1e-3, 0.3, 0.25, 0.01] {
            let d = EmpiricalDistribution::new(10.0, 98.0, 88.0 * frac).unwrap();
            assert_eq!(grid_knots(frac), d.grid().len(), "{frac}");
        }
    }
}
