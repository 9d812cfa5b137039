use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{FamilyPoint, SweepConfig};
use crate::demand::DemandCurve;
use crate::empirical_learner::{run_cr_episode, write_cr_trace_csv};
use crate::error::{Error, Result};
use crate::linear_learner::{run_episode, write_trace_csv};
use crate::rng::stream_rng;

/// Hazard-rate validation scans the support at this fraction of its width.
const IHR_GRID_FRACTION: f64 = 1e-4;

const ORACLE_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearOutcome {
    /// Forecast price minus `b*`.
    pub price_error: f64,
    /// Forecast quantity `β₀/2` minus `q*`.
    pub quantity_error: f64,
    /// `1 - F(forecast price)` minus `q*`; uses the true curve.
    pub oracle_quantity_error: f64,
    pub projections: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutcome {
    pub reports_per_period: usize,
    pub price_error: f64,
    pub quantity_error: f64,
    pub sup_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub index: usize,
    pub sigma: Option<f64>,
    pub replication: u32,
    pub b_star: f64,
    pub q_star: f64,
    pub linear: LinearOutcome,
    /// In `reports_per_period` config order.
    pub baseline: Vec<BaselineOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedPoint {
    pub index: usize,
    pub sigma: Option<f64>,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepResult {
    /// Ordered by family index, then replication.
    pub records: Vec<SweepRecord>,
    pub skipped: Vec<SkippedPoint>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOptions {
    /// Worker threads; rayon's default when `None`.
    pub workers: Option<usize>,
    /// Per-episode trace CSVs are written here when set.
    pub trace_dir: Option<PathBuf>,
}

/// Stream id of one episode: family point, learner slot (0 for the linear
/// learner, `1 + i` for the `i`-th baseline), replication.
pub fn stream_id(point: usize, slot: usize, replication: u32) -> u64 {
    ((point as u64) << 16) | ((slot as u64) << 8) | u64::from(replication)
}

pub fn run_sweep(config: &SweepConfig, options: &RunOptions) -> Result<SweepResult> {
    config.validate()?;
    let points = config.family.curves()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = options.workers {
        if n == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    if let Some(dir) = &options.trace_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let outcomes: Vec<Result<Vec<SweepRecord>, SkippedPoint>> = pool.install(|| {
        points
            .par_iter()
            .map(|point| run_point(config, point, options.trace_dir.as_deref()))
            .collect::<Result<_>>()
    })?;

    let mut result = SweepResult::default();
    for outcome in outcomes {
        match outcome {
            Ok(records) => result.records.extend(records),
            Err(skip) => {
                log::warn!("skipping family point {}: {}", skip.index, skip.reason);
                result.skipped.push(skip);
            }
        }
    }
    Ok(result)
}

/// Outer error aborts the sweep; inner error skips this point.
fn run_point(
    config: &SweepConfig,
    point: &FamilyPoint,
    trace_dir: Option<&Path>,
) -> Result<Result<Vec<SweepRecord>, SkippedPoint>> {
    let curve = &point.curve;
    let skip = |reason: String| {
        Ok(Err(SkippedPoint {
            index: point.index,
            sigma: point.sigma,
            reason,
        }))
    };
    let ihr = curve.validate_ihr(curve.support_width() * IHR_GRID_FRACTION)?;
    if !ihr.is_ihr {
        return skip("hazard rate is not increasing".into());
    }
    let opt = match curve.optimal_price(ORACLE_TOL) {
        Ok(o) => o,
        Err(e @ Error::Oracle(_)) => return skip(e.to_string()),
        Err(e) => return Err(e),
    };
    let linear = config.linear.config_for(curve, config.n_buyers)?;
    let h = config.baseline.grid_fraction * curve.support_width();

    let mut records = Vec::with_capacity(config.replications as usize);
    for rep in 0..config.replications {
        let trace = trace_dir.is_some();
        let mut rng = stream_rng(config.seed, stream_id(point.index, 0, rep));
        let ep = run_episode(curve, &linear, config.horizon, &mut rng, trace)?;
        if let (Some(dir), Some(rows)) = (trace_dir, &ep.trace) {
            let path = dir.join(format!("trace_linear_{}_{}.csv", point.index, rep));
            write_file(&path, |w| write_trace_csv(rows, w))?;
        }
        let f = ep.final_forecast;
        let linear_outcome = LinearOutcome {
            price_error: f.price - opt.b_star,
            quantity_error: f.quantity - opt.q_star,
            oracle_quantity_error: oracle_quantity(curve, f.price) - opt.q_star,
            projections: ep.projections,
        };

        let mut baseline = Vec::with_capacity(config.baseline.reports_per_period.len());
        for (i, &k) in config.baseline.reports_per_period.iter().enumerate() {
            let mut rng = stream_rng(config.seed, stream_id(point.index, i + 1, rep));
            let ep = run_cr_episode(curve, k, config.horizon, h, &mut rng, trace)?;
            if let (Some(dir), Some(rows)) = (trace_dir, &ep.trace) {
                let path = dir.join(format!("trace_cr_k{}_{}_{}.csv", k, point.index, rep));
                write_file(&path, |w| write_cr_trace_csv(rows, w))?;
            }
            baseline.push(BaselineOutcome {
                reports_per_period: k,
                price_error: ep.forecast.price - opt.b_star,
                quantity_error: ep.forecast.quantity - opt.q_star,
                sup_distance: ep.sup_distance,
            });
        }
        records.push(SweepRecord {
            index: point.index,
            sigma: point.sigma,
            replication: rep,
            b_star: opt.b_star,
            q_star: opt.q_star,
            linear: linear_outcome,
            baseline,
        });
    }
    Ok(Ok(records))
}

fn oracle_quantity(curve: &DemandCurve, price: f64) -> f64 {
    curve.survival(price).unwrap_or(f64::NAN)
}

pub(crate) fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(|e| Error::io(path, e))?;
    std::io::Write::flush(&mut w).map_err(|e| Error::io(path, e))
}
