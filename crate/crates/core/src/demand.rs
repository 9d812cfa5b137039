//! Valuation distributions and the ground-truth pricing oracle.
//!
//! A [`DemandCurve`] is the distribution `F` of a single buyer's reservation
//! value. With `N` buyers the expected normalized demand at price `p` is
//! `1 - F(p)`, so the expected revenue per buyer is `p (1 - F(p))`. For
//! distributions with an increasing hazard rate `f / (1 - F)` this has a
//! unique maximizer `b*`, the root of
//!
//! ```text
//! (1 - F(b)) / f(b) - b = 0
//! ```
//!
//! The learners never see the curve directly; it is used to draw buyers and
//! to score the learners' forecasts.

use std::f64::consts::{FRAC_2_SQRT_PI, SQRT_2};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erf_inv, erfc};

use crate::error::{Error, Result};

/// Half-normal curves are capped this many standard deviations above the
/// truncation point; the mass beyond is below `1e-15`.
pub const GAUSSIAN_CAP_SIGMAS: f64 = 8.0;

/// `1 - F(p)` at or below this is treated as saturated.
pub const SATURATION: f64 = 1e-12;

/// Number of grid points used to cross-check the root-finder.
const ORACLE_GRID_POINTS: usize = 10_001;

/// Family parameters of a [`DemandCurve`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CurveKind {
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Gaussian with mean `mu` truncated below at `mu`, i.e. a half-normal
    /// shifted to start at `mu`.
    TruncatedGaussian {
        mu: f64,
        sigma: f64,
    },
    /// Piecewise-linear cdf through `(price, cdf)` knots.
    Tabulated {
        knots: Vec<(f64, f64)>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemandCurve {
    kind: CurveKind,
    support_lo: f64,
    support_hi: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IhrReport {
    pub is_ihr: bool,
    /// Largest `|f(p) - f(p')| / |p - p'|` between adjacent grid points.
    pub lipschitz_estimate: f64,
    pub grid_step: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalPoint {
    pub b_star: f64,
    pub q_star: f64,
    pub profit_star: f64,
}

fn check_finite(p: f64) -> Result<()> {
    if p.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("price must be finite, got {p}")))
    }
}

impl DemandCurve {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi) {
            return Err(Error::invalid(format!(
                "uniform support must satisfy 0 <= lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(DemandCurve {
            kind: CurveKind::Uniform { lo, hi },
            support_lo: lo,
            support_hi: hi,
        })
    }

    pub fn truncated_gaussian(mu: f64, sigma: f64) -> Result<Self> {
        if !(mu.is_finite() && sigma.is_finite() && mu >= 0.0 && sigma > 0.0) {
            return Err(Error::invalid(format!(
                "truncated gaussian needs mu >= 0 and sigma > 0, got mu={mu}, sigma={sigma}"
            )));
        }
        Ok(DemandCurve {
            kind: CurveKind::TruncatedGaussian { mu, sigma },
            support_lo: mu,
            support_hi: mu + GAUSSIAN_CAP_SIGMAS * sigma,
        })
    }

    /// Knots must be strictly increasing in both price and cdf, start at
    /// cdf 0 and end at cdf 1 (within `1e-6`).
    pub fn tabulated(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::invalid("tabulated curve needs at least two knots"));
        }
        if knots.iter().any(|&(p, c)| !p.is_finite() || !c.is_finite()) {
            return Err(Error::invalid("tabulated knots must be finite"));
        }
        if knots[0].0 < 0.0 {
            return Err(Error::invalid("tabulated prices must be non-negative"));
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
                return Err(Error::invalid(format!(
                    "tabulated knots must be strictly increasing in both columns: {:?} then {:?}",
                    w[0], w[1]
                )));
            }
        }
        let first = knots[0].1;
        let last = knots[knots.len() - 1].1;
        if first.abs() > 1e-9 || !(1.0 - 1e-6..=1.0 + 1e-9).contains(&last) {
            return Err(Error::invalid(format!(
                "tabulated cdf must run from 0 to 1, got {first} .. {last}"
            )));
        }
        let support_lo = knots[0].0;
        let support_hi = knots[knots.len() - 1].0;
        Ok(DemandCurve {
            kind: CurveKind::Tabulated { knots },
            support_lo,
            support_hi,
        })
    }

    /// Reads a two-column `price cdf` text file (whitespace or comma
    /// separated, `#` comments allowed).
    pub fn tabulated_from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut knots = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|_| {
                    Error::invalid(format!(
                        "{}:{}: bad number {s:?}",
                        path.display(),
                        lineno + 1
                    ))
                })
            };
            if cols.len() != 2 {
                return Err(Error::invalid(format!(
                    "{}:{}: expected two columns",
                    path.display(),
                    lineno + 1
                )));
            }
            knots.push((parse(cols[0])?, parse(cols[1])?));
        }
        Self::tabulated(knots)
    }

    pub fn from_kind(kind: &CurveKind) -> Result<Self> {
        match kind {
            CurveKind::Uniform { lo, hi } => Self::uniform(*lo, *hi),
            CurveKind::TruncatedGaussian { mu, sigma } => Self::truncated_gaussian(*mu, *sigma),
            CurveKind::Tabulated { knots } => Self::tabulated(knots.clone()),
        }
    }

    pub fn kind(&self) -> &CurveKind {
        &self.kind
    }

    pub fn support_lo(&self) -> f64 {
        self.support_lo
    }

    pub fn support_hi(&self) -> f64 {
        self.support_hi
    }

    pub fn support_width(&self) -> f64 {
        self.support_hi - self.support_lo
    }

    /// `F(p)`, clamped to 0 below the support and 1 above it.
    pub fn cdf(&self, p: f64) -> Result<f64> {
        check_finite(p)?;
        Ok(self.cdf_unchecked(p))
    }

    /// `f(p)`, zero outside the support.
    pub fn pdf(&self, p: f64) -> Result<f64> {
        check_finite(p)?;
        Ok(self.pdf_unchecked(p))
    }

    /// `1 - F(p)`, computed without cancellation in the Gaussian tail.
    pub fn survival(&self, p: f64) -> Result<f64> {
        check_finite(p)?;
        Ok(self.survival_unchecked(p))
    }

    pub fn hazard_rate(&self, p: f64) -> Result<f64> {
        check_finite(p)?;
        let s = self.survival_unchecked(p);
        if s <= SATURATION {
            return Err(Error::HazardSaturated { price: p });
        }
        Ok(self.pdf_unchecked(p) / s)
    }

    pub(crate) fn cdf_unchecked(&self, p: f64) -> f64 {
        if p <= self.support_lo {
            return 0.0;
        }
        if p >= self.support_hi {
            return 1.0;
        }
        match &self.kind {
            CurveKind::Uniform { lo, hi } => (p - lo) / (hi - lo),
            CurveKind::TruncatedGaussian { mu, sigma } => erf((p - mu) / (sigma * SQRT_2)),
            CurveKind::Tabulated { knots } => {
                let i = segment(knots, p);
                let (p0, c0) = knots[i];
                let (p1, c1) = knots[i + 1];
                c0 + (c1 - c0) * (p - p0) / (p1 - p0)
            }
        }
    }

    pub(crate) fn survival_unchecked(&self, p: f64) -> f64 {
        match &self.kind {
            CurveKind::TruncatedGaussian { mu, sigma } => {
                if p <= self.support_lo {
                    1.0
                } else if p >= self.support_hi {
                    0.0
                } else {
                    erfc((p - mu) / (sigma * SQRT_2))
                }
            }
            _ => 1.0 - self.cdf_unchecked(p),
        }
    }

    pub(crate) fn pdf_unchecked(&self, p: f64) -> f64 {
        if p < self.support_lo || p > self.support_hi {
            return 0.0;
        }
        match &self.kind {
            CurveKind::Uniform { lo, hi } => 1.0 / (hi - lo),
            CurveKind::TruncatedGaussian { mu, sigma } => {
                let z = (p - mu) / sigma;
                // 2 φ(z) / σ = sqrt(2/π) e^{-z²/2} / σ
                FRAC_2_SQRT_PI / SQRT_2 * (-0.5 * z * z).exp() / sigma
            }
            CurveKind::Tabulated { knots } => {
                let i = segment(knots, p);
                let (p0, c0) = knots[i];
                let (p1, c1) = knots[i + 1];
                (c1 - c0) / (p1 - p0)
            }
        }
    }

    /// `F⁻¹(u)` for `u ∈ [0, 1]`, always inside the support.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let v = match &self.kind {
            CurveKind::Uniform { lo, hi } => lo + u * (hi - lo),
            CurveKind::TruncatedGaussian { mu, sigma } => mu + sigma * SQRT_2 * erf_inv(u),
            CurveKind::Tabulated { knots } => {
                let i = knots
                    .partition_point(|&(_, c)| c <= u)
                    .clamp(1, knots.len() - 1)
                    - 1;
                let (p0, c0) = knots[i];
                let (p1, c1) = knots[i + 1];
                p0 + (p1 - p0) * (u - c0) / (c1 - c0)
            }
        };
        v.clamp(self.support_lo, self.support_hi)
    }

    /// One valuation by the inverse-cdf method; consumes exactly one `f64`
    /// draw from `rng`.
    pub fn sample_valuation<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.inverse_cdf(rng.random::<f64>())
    }

    /// Scans the support at spacing `grid_step`, checking that the hazard
    /// rate never decreases and estimating the density's Lipschitz constant.
    ///
    /// Points where the cdf is saturated are skipped for the hazard check;
    /// the density scan covers the whole support.
    pub fn validate_ihr(&self, grid_step: f64) -> Result<IhrReport> {
        if !(grid_step > 0.0 && grid_step.is_finite()) {
            return Err(Error::invalid(format!(
                "grid_step must be positive, got {grid_step}"
            )));
        }
        let n = (self.support_width() / grid_step + 1e-9).floor();
        if n > 1e8 {
            return Err(Error::invalid(format!(
                "grid_step {grid_step} gives {n} points; too fine for this support"
            )));
        }
        let n = n as usize;
        let mut is_ihr = true;
        let mut lipschitz: f64 = 0.0;
        let mut prev_hazard = f64::NEG_INFINITY;
        let mut prev_pdf: Option<f64> = None;
        for i in 0..=n {
            let p = self.support_lo + i as f64 * grid_step;
            let f = self.pdf_unchecked(p);
            if let Some(pf) = prev_pdf {
                lipschitz = lipschitz.max((f - pf).abs() / grid_step);
            }
            prev_pdf = Some(f);
            let s = self.survival_unchecked(p);
            if s > SATURATION {
                let h = f / s;
                if h < prev_hazard {
                    is_ihr = false;
                }
                prev_hazard = h;
            }
        }
        Ok(IhrReport {
            is_ihr,
            lipschitz_estimate: lipschitz,
            grid_step,
        })
    }

    /// The revenue-maximizing price, found by bisection on the first-order
    /// condition and cross-checked against a dense grid of `p (1 - F(p))`.
    pub fn optimal_price(&self, tol: f64) -> Result<OptimalPoint> {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::invalid(format!(
                "tolerance must be positive, got {tol}"
            )));
        }
        // (1 - F(b)) - b f(b) has the sign of the first-order condition and
        // stays defined where f vanishes.
        let foc = |b: f64| self.survival_unchecked(b) - b * self.pdf_unchecked(b);
        let (mut lo, mut hi) = (self.support_lo, self.support_hi);
        let (g_lo, g_hi) = (foc(lo), foc(hi));
        if !(g_lo > 0.0 && g_hi < 0.0) {
            return Err(Error::Oracle(format!(
                "first-order condition has no sign change on [{lo}, {hi}] ({g_lo:e}, {g_hi:e})"
            )));
        }
        let stop_width = tol * 1e-3;
        for _ in 0..256 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= stop_width {
                break;
            }
            if foc(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let b_star = 0.5 * (lo + hi);
        let f = self.pdf_unchecked(b_star);
        let q_star = self.survival_unchecked(b_star);
        let residual = q_star / f - b_star;
        if !(residual.abs() <= tol) {
            return Err(Error::Oracle(format!(
                "first-order residual {residual:e} exceeds tolerance {tol:e} at b = {b_star}"
            )));
        }
        let profit_star = b_star * q_star;

        let step = self.support_width() / (ORACLE_GRID_POINTS - 1) as f64;
        let grid_best = (0..ORACLE_GRID_POINTS)
            .map(|i| {
                let p = self.support_lo + i as f64 * step;
                p * self.survival_unchecked(p)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        if grid_best > profit_star + 1e-9 * profit_star.max(1.0) {
            return Err(Error::Oracle(format!(
                "root b = {b_star} earns {profit_star}, but a grid point earns {grid_best}"
            )));
        }
        Ok(OptimalPoint {
            b_star,
            q_star,
            profit_star,
        })
    }
}

/// Index `i` of the knot segment `[p_i, p_{i+1}]` containing `p`.
fn segment(knots: &[(f64, f64)], p: f64) -> usize {
    knots
        .partition_point(|&(k, _)| k <= p)
        .clamp(1, knots.len() - 1)
        - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use std::f64::consts::PI;

    fn tg(sigma: f64) -> DemandCurve {
        DemandCurve::truncated_gaussian(10.0, sigma).unwrap()
    }

    /// Composite trapezoid rule with `n` panels.
    fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let inner: f64 = (1..n).map(|i| f(a + i as f64 * h)).sum();
        h * (0.5 * f(a) + inner + 0.5 * f(b))
    }

    #[test]
    fn uniform_basics() {
        let u = DemandCurve::uniform(0.0, 1.0).unwrap();
        assert_eq!(u.cdf(0.5).unwrap(), 0.5);
        assert_eq!(u.pdf(0.3).unwrap(), 1.0);
        assert_eq!(u.pdf(1.5).unwrap(), 0.0);
        assert_eq!(u.hazard_rate(0.5).unwrap(), 2.0);
        assert_eq!(u.hazard_rate(0.0).unwrap(), 1.0);
        assert_eq!(u.cdf(-3.0).unwrap(), 0.0);
        assert_eq!(u.cdf(7.0).unwrap(), 1.0);
    }

    #[test]
    fn non_finite_prices_are_rejected() {
        let u = DemandCurve::uniform(0.0, 1.0).unwrap();
        assert!(matches!(u.cdf(f64::NAN), Err(Error::InvalidInput(_))));
        assert!(matches!(u.pdf(f64::INFINITY), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn hazard_saturates_at_top_of_support() {
        let u = DemandCurve::uniform(0.0, 1.0).unwrap();
        assert!(matches!(
            u.hazard_rate(1.0),
            Err(Error::HazardSaturated { .. })
        ));
        assert!(matches!(
            tg(11.0).hazard_rate(200.0),
            Err(Error::HazardSaturated { .. })
        ));
    }

    #[test]
    fn half_normal_density_at_mode() {
        let c = tg(11.0);
        let expected = 2.0 / (11.0 * (2.0 * PI).sqrt());
        assert!((c.pdf(10.0).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.0725).abs() < 1e-4);
        let mass = trapezoid(|p| c.pdf_unchecked(p), 10.0, c.support_hi(), 200_000);
        assert!((mass - 1.0).abs() < 1e-8, "mass {mass}");
    }

    #[test]
    fn half_normal_cdf_matches_quadrature() {
        let c = tg(11.0);
        assert_eq!(c.cdf(10.0).unwrap(), 0.0);
        let quad = trapezoid(|p| c.pdf_unchecked(p), 10.0, 20.0, 100_000);
        assert!((c.cdf(20.0).unwrap() - quad).abs() < 1e-9);
        // frozen from the quadrature above
        assert!((quad - 0.636_697_859_113_102).abs() < 1e-9, "quad {quad}");
    }

    #[test]
    fn half_normal_hazard_increases() {
        let c = tg(11.0);
        let h = |p: f64| {
            let tail = trapezoid(|x| c.pdf_unchecked(x), p, c.support_hi(), 200_000);
            c.pdf_unchecked(p) / tail
        };
        assert!(h(16.0) > h(12.0));
        assert!(c.hazard_rate(16.0).unwrap() > c.hazard_rate(12.0).unwrap());
        assert!((c.hazard_rate(16.0).unwrap() - h(16.0)).abs() < 1e-8);
    }

    #[test]
    fn ihr_validation() {
        let u = DemandCurve::uniform(0.0, 1.0)
            .unwrap()
            .validate_ihr(0.01)
            .unwrap();
        assert!(u.is_ihr);
        assert_eq!(u.lipschitz_estimate, 0.0);
        assert!(tg(11.0).validate_ihr(0.01).unwrap().is_ihr);
        assert!(tg(16.0).validate_ihr(0.01).unwrap().is_ihr);

        let bumpy =
            DemandCurve::tabulated(vec![(0.0, 0.0), (1.0, 0.5), (2.0, 0.55), (3.0, 1.0)]).unwrap();
        let r = bumpy.validate_ihr(0.01).unwrap();
        assert!(!r.is_ihr);
        assert!(r.lipschitz_estimate > 0.0);

        assert!(matches!(
            tg(11.0).validate_ihr(0.0),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            tg(11.0).validate_ihr(-1.0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn uniform_optimal_price() {
        let o = DemandCurve::uniform(0.0, 1.0)
            .unwrap()
            .optimal_price(1e-8)
            .unwrap();
        assert!((o.b_star - 0.5).abs() < 1e-8);
        assert!((o.q_star - 0.5).abs() < 1e-8);
        assert!((o.profit_star - 0.25).abs() < 1e-8);
        for lo in [0.1, 0.3, 0.7] {
            let o = DemandCurve::uniform(lo, lo + 1.0)
                .unwrap()
                .optimal_price(1e-8)
                .unwrap();
            assert!((o.b_star - (1.0 + lo) / 2.0).abs() < 1e-8);
        }
    }

    #[test]
    fn uniform_with_corner_optimum_fails_oracle() {
        // revenue is decreasing on [10, 11]; the first-order condition has no root
        let c = DemandCurve::uniform(10.0, 11.0).unwrap();
        assert!(matches!(c.optimal_price(1e-8), Err(Error::Oracle(_))));
    }

    #[test]
    fn gaussian_optimal_prices_against_dense_grid() {
        let mut prev = 0.0;
        for sigma in [11.0, 12.5, 14.0, 16.0] {
            let c = tg(sigma);
            let o = c.optimal_price(1e-8).unwrap();
            // independent oracle: argmax of p (1 - F(p)) at step 1e-4 on [10, 30]
            let (mut best_p, mut best) = (0.0, f64::NEG_INFINITY);
            for i in 0..=200_000 {
                let p = 10.0 + i as f64 * 1e-4;
                let r = p * erfc((p - 10.0) / (sigma * SQRT_2));
                if r > best {
                    best = r;
                    best_p = p;
                }
            }
            assert!(
                (o.b_star - best_p).abs() < 2e-4,
                "sigma {sigma}: {} vs {best_p}",
                o.b_star
            );
            assert!((10.0..=20.0).contains(&o.b_star));
            assert!(o.b_star > prev);
            prev = o.b_star;
        }
    }

    #[test]
    fn inverse_cdf_round_trips() {
        for c in [DemandCurve::uniform(0.0, 1.0).unwrap(), tg(13.0)] {
            for u in [0.0, 0.1, 0.25, 0.5, 0.9] {
                let v = c.inverse_cdf(u);
                let err = (c.cdf(v).unwrap() - u).abs();
                assert!(err < 1e-10, "u {u}: {err:e}");
            }
        }
        let u = DemandCurve::uniform(0.0, 1.0).unwrap();
        assert_eq!(u.inverse_cdf(0.25), 0.25);
    }

    #[test]
    fn half_normal_sample_mean() {
        let c = tg(11.0);
        let mut rng = stream_rng(11, 0);
        let n = 1_000_000;
        let mean = (0..n).map(|_| c.sample_valuation(&mut rng)).sum::<f64>() / n as f64;
        let analytic = 10.0 + 11.0 * (2.0 / PI).sqrt();
        assert!((mean - analytic).abs() < 0.01 * analytic);
    }

    #[test]
    fn tabulated_file_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.txt");
        std::fs::write(&path, "# price cdf\n0 0\n1, 0.5\n2 1\n").unwrap();
        let c = DemandCurve::tabulated_from_file(&path).unwrap();
        assert_eq!(c.cdf(0.5).unwrap(), 0.25);
        assert_eq!(c.pdf(1.5).unwrap(), 0.5);
        assert_eq!(c.inverse_cdf(0.75), 1.5);

        std::fs::write(&path, "0 0\n1 0.5\n0.5 1\n").unwrap();
        assert!(DemandCurve::tabulated_from_file(&path).is_err());
        assert!(matches!(
            DemandCurve::tabulated_from_file(dir.path().join("missing.txt")),
            Err(Error::Io { .. })
        ));
    }
}
