//! The non-parametric baseline: learn the valuation cdf itself.
//!
//! Each period the seller receives `K` truthful valuation reports and folds
//! them into a running empirical cdf `F̂ₜ` by the recursion
//!
//! ```text
//! F̂ₜ(v) = F̂ₜ₋₁(v) + (1/t) (batchₜ(≤ v) - F̂ₜ₋₁(v))
//! ```
//!
//! evaluated on a fixed price grid. The forecast price is the grid knot
//! maximizing `p (1 - F̂ₜ(p))`.
//!
//! Unrolling the recursion gives `F̂ₜ(v) = (1/t) Σₛ batchₛ(≤ v)`, so the
//! distribution is stored as the running sum `Σₛ batchₛ(≤ v)` in difference
//! form: a report landing at knot `j` adds `1/K` to slot `j`, and the cdf is
//! recovered by a prefix sum. Updates cost `O(K log G)` instead of `O(G)`.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::demand::DemandCurve;
use crate::error::{Error, Result};
use crate::market::{realize_valuations, ValuationBatch};

/// Default grid spacing as a fraction of the support width.
pub const DEFAULT_GRID_FRACTION: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDistribution {
    grid: Vec<f64>,
    /// `increments[j]` is the summed batch fraction first counted at knot `j`.
    increments: Vec<f64>,
    period: u64,
}

impl EmpiricalDistribution {
    /// Knots `lo, lo + h, …` up to and including `hi`; the last spacing may
    /// be shorter than `h`.
    pub fn new(lo: f64, hi: f64, h: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!("bad grid range [{lo}, {hi}]")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid(format!(
                "grid resolution must be positive, got {h}"
            )));
        }
        let steps = ((hi - lo) / h - 1e-9).ceil().max(1.0);
        if steps > 1e8 {
            return Err(Error::invalid(format!("grid resolution {h} is too fine")));
        }
        let steps = steps as usize;
        let mut grid: Vec<f64> = (0..steps).map(|i| lo + i as f64 * h).collect();
        grid.push(hi);
        Ok(EmpiricalDistribution {
            increments: vec![0.0; grid.len()],
            grid,
            period: 0,
        })
    }

    pub fn for_curve(curve: &DemandCurve, h: f64) -> Result<Self> {
        Self::new(curve.support_lo(), curve.support_hi(), h)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    /// `F̂ₜ` at every knot; all zeros before the first update.
    pub fn mass(&self) -> Vec<f64> {
        let t = self.period.max(1) as f64;
        let mut acc = 0.0;
        self.increments
            .iter()
            .map(|d| {
                acc += d;
                (acc / t).min(1.0)
            })
            .collect()
    }

    /// Folds one period's reports into the estimate.
    pub fn update(&mut self, batch: &ValuationBatch) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::invalid("valuation batch is empty"));
        }
        let w = 1.0 / batch.len() as f64;
        for &v in &batch.values {
            if v.is_nan() {
                return Err(Error::invalid("valuation is NaN"));
            }
            // first knot >= v; reports above the grid never count
            let j = self.grid.partition_point(|&k| k < v);
            if let Some(slot) = self.increments.get_mut(j) {
                *slot += w;
            }
        }
        self.period += 1;
        Ok(())
    }

    /// Revenue-maximizing knot under `F̂ₜ`, lowest price on ties.
    pub fn cr_price(&self) -> Result<CrForecast> {
        if self.period == 0 {
            return Err(Error::invalid("no reports yet"));
        }
        let mass = self.mass();
        let mut best = CrForecast {
            price: self.grid[0],
            quantity: 1.0 - mass[0],
        };
        let mut best_rev = best.price * best.quantity;
        for (&p, &m) in self.grid.iter().zip(&mass).skip(1) {
            let rev = p * (1.0 - m);
            if rev > best_rev {
                best_rev = rev;
                best = CrForecast {
                    price: p,
                    quantity: 1.0 - m,
                };
            }
        }
        Ok(best)
    }

    /// `max |F̂ₜ(v) - F(v)|` over the knots.
    pub fn sup_distance(&self, curve: &DemandCurve) -> f64 {
        self.grid
            .iter()
            .zip(self.mass())
            .map(|(&v, m)| (m - curve.cdf_unchecked(v)).abs())
            .fold(0.0, f64::max)
    }

    /// Remembered numbers: one per knot.
    pub fn memory_size(&self) -> usize {
        self.grid.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrForecast {
    pub price: f64,
    /// `1 - F̂ₜ(price)`.
    pub quantity: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrTraceRow {
    pub period: u64,
    pub price: f64,
    pub sup_distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrEpisode {
    pub forecast: CrForecast,
    pub sup_distance: f64,
    /// Grid size plus per-period reports.
    pub complexity: usize,
    pub trace: Option<Vec<CrTraceRow>>,
}

pub fn run_cr_episode<R: Rng + ?Sized>(
    curve: &DemandCurve,
    reports_per_period: usize,
    horizon: u64,
    grid_resolution: f64,
    rng: &mut R,
    trace: bool,
) -> Result<CrEpisode> {
    if reports_per_period == 0 || horizon == 0 {
        return Err(Error::invalid(format!(
            "need K >= 1 and T >= 1, got K = {reports_per_period}, T = {horizon}"
        )));
    }
    let mut dist = EmpiricalDistribution::for_curve(curve, grid_resolution)?;
    let mut rows = trace.then(Vec::new);
    for _ in 0..horizon {
        let batch = realize_valuations(curve, reports_per_period, rng)?;
        dist.update(&batch)?;
        if let Some(rows) = rows.as_mut() {
            rows.push(CrTraceRow {
                period: dist.period(),
                price: dist.cr_price()?.price,
                sup_distance: dist.sup_distance(curve),
            });
        }
    }
    Ok(CrEpisode {
        forecast: dist.cr_price()?,
        sup_distance: dist.sup_distance(curve),
        complexity: dist.memory_size() + reports_per_period,
        trace: rows,
    })
}

pub fn write_cr_trace_csv<W: Write>(rows: &[CrTraceRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "period,price,sup_distance")?;
    for r in rows {
        writeln!(out, "{},{},{}", r.period, r.price, r.sup_distance)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn batch(values: &[f64]) -> ValuationBatch {
        ValuationBatch {
            values: values.to_vec(),
        }
    }

    #[test]
    fn grid_spans_support() {
        let d = EmpiricalDistribution::new(0.0, 1.0, 1e-3).unwrap();
        assert_eq!(d.grid().len(), 1001);
        assert_eq!(d.grid()[0], 0.0);
        assert_eq!(*d.grid().last().unwrap(), 1.0);
        assert!(d.grid().windows(2).all(|w| w[0] < w[1]));
        let odd = EmpiricalDistribution::new(0.0, 1.0, 0.3).unwrap();
        assert_eq!(odd.grid().len(), 5);
        assert!(EmpiricalDistribution::new(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn single_then_second_report() {
        let mut d = EmpiricalDistribution::new(0.0, 1.0, 0.1).unwrap();
        d.update(&batch(&[0.3])).unwrap();
        for (&v, m) in d.grid().iter().zip(d.mass()) {
            assert_eq!(m, if v >= 0.3 - 1e-12 { 1.0 } else { 0.0 }, "knot {v}");
        }
        d.update(&batch(&[0.7])).unwrap();
        for (&v, m) in d.grid().iter().zip(d.mass()) {
            let expect = if v >= 0.7 - 1e-12 {
                1.0
            } else if v >= 0.3 - 1e-12 {
                0.5
            } else {
                0.0
            };
            assert_eq!(m, expect, "knot {v}");
        }
        assert!(d.update(&batch(&[])).is_err());
    }

    #[test]
    fn price_requires_a_report() {
        let d = EmpiricalDistribution::new(0.0, 1.0, 0.01).unwrap();
        assert!(d.cr_price().is_err());
    }

    #[test]
    fn step_at_point_three_prices_just_below() {
        let mut d = EmpiricalDistribution::new(0.0, 1.0, 1e-3).unwrap();
        d.update(&batch(&[0.3])).unwrap();
        let f = d.cr_price().unwrap();
        assert!((f.price - 0.299).abs() < 1e-12, "{}", f.price);
        assert_eq!(f.quantity, 1.0);
    }

    #[test]
    fn many_uniform_reports_price_near_half() {
        let c = DemandCurve::uniform(0.0, 1.0).unwrap();
        let mut d = EmpiricalDistribution::for_curve(&c, 1e-3).unwrap();
        let mut rng = stream_rng(11, 0);
        for _ in 0..10_000 {
            d.update(&realize_valuations(&c, 10, &mut rng).unwrap())
                .unwrap();
        }
        assert!((d.cr_price().unwrap().price - 0.5).abs() < 0.02);
        assert!(d.sup_distance(&c) <= 0.02);
    }

    #[test]
    fn short_uniform_episode() {
        let c = DemandCurve::uniform(0.0, 1.0).unwrap();
        let ep = run_cr_episode(&c, 2, 10_000, 1e-3, &mut stream_rng(12, 0), false).unwrap();
        assert!((ep.forecast.price - 0.5).abs() < 0.03);
        assert_eq!(ep.complexity, 1001 + 2);
        assert!(run_cr_episode(&c, 0, 10, 1e-3, &mut stream_rng(12, 0), false).is_err());

        let traced = run_cr_episode(&c, 3, 20, 1e-2, &mut stream_rng(12, 1), true).unwrap();
        let rows = traced.trace.unwrap();
        assert_eq!(rows.len(), 20);
        assert_eq!(rows[19].price, traced.forecast.price);
        let mut buf = Vec::new();
        write_cr_trace_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 21);
    }
}
