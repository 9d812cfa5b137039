//! Constant-gain least squares on a misspecified linear demand curve.
//!
//! The learner believes demand is `q = β₀ + β₁ p` and posts the price that
//! would maximize revenue under that belief, `b = -β₀ / (2β₁)`, plus a small
//! experimental perturbation `ε₁`. After observing the realized quantity it
//! moves `β` along `R⁻¹ [1, p]ᵀ` scaled by the forecast error, where
//!
//! ```text
//! R = | 1   b       |
//!     | b   b² + σ₁² |
//! ```
//!
//! is the second-moment matrix of the regressor `[1, b + ε₁]` at the current
//! beliefs. Periods where nobody buys (or everybody buys) carry no slope
//! information, so only the intercept is nudged, moving the implied price by
//! exactly `a / (2|β₁|)` in the indicated direction. Any step leaving the
//! outer belief box is replaced by a fixed reset point.
//!
//! The learner's entire memory is the pair `(β₀, β₁)`.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::demand::DemandCurve;
use crate::error::{Error, Result};
use crate::market::{realize_demand, MarketOutcome};

/// Posted prices are clamped below at this value.
pub const MIN_PRICE: f64 = 1e-9;

/// Largest admissible constant gain.
pub const MAX_CONSTANT_GAIN: f64 = 1.0;

/// Default lower bound on the forecast quantity `β₀ / 2` inside the inner box.
pub const DEFAULT_Q_MIN: f64 = 0.01;

/// Default inflation of the inner box, as a fraction of each range's width.
pub const DEFAULT_BOX_MARGIN: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearBeliefs {
    pub beta0: f64,
    pub beta1: f64,
}

/// The learner's forecast `(price, quantity)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub price: f64,
    /// Model-implied sales at the forecast price, `β₀ / 2`.
    pub quantity: f64,
}

impl LinearBeliefs {
    pub fn new(beta0: f64, beta1: f64) -> Self {
        LinearBeliefs { beta0, beta1 }
    }

    /// Beliefs with intercept `beta0` whose implied price is `price`.
    pub fn with_implied_price(beta0: f64, price: f64) -> Result<Self> {
        if !(beta0 > 0.0 && price > 0.0 && beta0.is_finite() && price.is_finite()) {
            return Err(Error::invalid(format!(
                "need beta0 > 0 and price > 0, got {beta0}, {price}"
            )));
        }
        Ok(LinearBeliefs {
            beta0,
            beta1: -beta0 / (2.0 * price),
        })
    }

    /// `-β₀ / (2β₁)`.
    pub fn implied_price(&self) -> Result<f64> {
        if !(self.beta1 < 0.0) {
            return Err(Error::Invariant(format!(
                "slope must be negative to imply a price, got beta1 = {}",
                self.beta1
            )));
        }
        Ok(-self.beta0 / (2.0 * self.beta1))
    }

    pub fn forecast(&self) -> Result<Forecast> {
        Ok(Forecast {
            price: self.implied_price()?,
            quantity: self.beta0 / 2.0,
        })
    }

    /// Realized quantity minus the model's prediction at the charged price.
    pub fn forecast_error(&self, outcome: &MarketOutcome) -> f64 {
        outcome.quantity - (self.beta0 + self.beta1 * outcome.price)
    }

    fn is_finite(&self) -> bool {
        self.beta0.is_finite() && self.beta1.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GainSchedule {
    Constant {
        a: f64,
    },
    /// `a_t = t^(-omega)`.
    Decreasing {
        omega: f64,
    },
}

impl GainSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GainSchedule::Constant { a } if a > 0.0 && a <= MAX_CONSTANT_GAIN => Ok(()),
            GainSchedule::Decreasing { omega } if omega > 0.0 && omega < 1.0 => Ok(()),
            other => Err(Error::invalid(format!("invalid gain schedule {other:?}"))),
        }
    }

    /// Gain applied in period `t` (1-based).
    pub fn gain_at(&self, t: u64) -> f64 {
        match *self {
            GainSchedule::Constant { a } => a,
            GainSchedule::Decreasing { omega } => (t.max(1) as f64).powf(-omega),
        }
    }

    pub fn constant_gain(&self) -> Option<f64> {
        match *self {
            GainSchedule::Constant { a } => Some(a),
            GainSchedule::Decreasing { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    /// `ε₁ ~ U[-ε, ε]`, variance `ε²/3`.
    UniformInterval,
    /// `ε₁ = ±ε` with equal probability, variance `ε²`.
    BinaryPoints,
}

/// Distribution of the experimental price perturbation. The variance is
/// always derived from the kind and half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PerturbationSpec {
    kind: PerturbationKind,
    epsilon: f64,
    sigma1_sq: f64,
}

impl PerturbationSpec {
    pub fn new(kind: PerturbationKind, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid(format!(
                "epsilon must be >= 0, got {epsilon}"
            )));
        }
        let sigma1_sq = match kind {
            PerturbationKind::UniformInterval => epsilon * epsilon / 3.0,
            PerturbationKind::BinaryPoints => epsilon * epsilon,
        };
        Ok(PerturbationSpec {
            kind,
            epsilon,
            sigma1_sq,
        })
    }

    pub fn kind(&self) -> PerturbationKind {
        self.kind
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn sigma1_sq(&self) -> f64 {
        self.sigma1_sq
    }

    /// One draw of `ε₁`; consumes one `f64` from `rng`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = rng.random::<f64>();
        match self.kind {
            PerturbationKind::UniformInterval => self.epsilon * (2.0 * u - 1.0),
            PerturbationKind::BinaryPoints => {
                if u < 0.5 {
                    -self.epsilon
                } else {
                    self.epsilon
                }
            }
        }
    }
}

/// A 2×2 matrix, row major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matrix2(pub [[f64; 2]; 2]);

impl Matrix2 {
    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn inverse(&self) -> Option<Matrix2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        let m = &self.0;
        Some(Matrix2([
            [m[1][1] / d, -m[0][1] / d],
            [-m[1][0] / d, m[0][0] / d],
        ]))
    }

    pub fn mul_vec(&self, v: [f64; 2]) -> [f64; 2] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1],
            m[1][0] * v[0] + m[1][1] * v[1],
        ]
    }

    pub fn mul(&self, other: &Matrix2) -> Matrix2 {
        let (a, b) = (&self.0, &other.0);
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Matrix2(out)
    }
}

/// Second moments of the regressor `[1, b + ε₁]` at the current beliefs.
pub fn regression_matrix(beliefs: &LinearBeliefs, spec: &PerturbationSpec) -> Result<Matrix2> {
    if spec.sigma1_sq == 0.0 {
        return Err(Error::SingularRegression);
    }
    let b = beliefs.implied_price()?;
    Ok(Matrix2([[1.0, b], [b, b * b + spec.sigma1_sq]]))
}

/// `implied_price + ε₁`, clamped to stay strictly positive.
pub fn perturbed_price<R: Rng + ?Sized>(
    beliefs: &LinearBeliefs,
    spec: &PerturbationSpec,
    rng: &mut R,
) -> Result<f64> {
    let b = beliefs.implied_price()?;
    Ok((b + spec.draw(rng)).max(MIN_PRICE))
}

/// Rectangle in (intercept, implied price) coordinates. Membership also
/// requires `β₀ > 0` and `β₁ < 0`, so the region is a convex wedge slice in
/// `(β₀, β₁)` space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefRegion {
    pub intercept: (f64, f64),
    pub price: (f64, f64),
}

impl BeliefRegion {
    pub fn contains(&self, beliefs: &LinearBeliefs) -> bool {
        if !beliefs.is_finite() || !(beliefs.beta0 > 0.0) || !(beliefs.beta1 < 0.0) {
            return false;
        }
        let b = -beliefs.beta0 / (2.0 * beliefs.beta1);
        b.is_finite()
            && (self.intercept.0..=self.intercept.1).contains(&beliefs.beta0)
            && (self.price.0..=self.price.1).contains(&b)
    }

    fn strictly_contains(&self, beliefs: &LinearBeliefs) -> bool {
        let b = -beliefs.beta0 / (2.0 * beliefs.beta1);
        beliefs.beta0 > self.intercept.0
            && beliefs.beta0 < self.intercept.1
            && b > self.price.0
            && b < self.price.1
            && beliefs.beta1 < 0.0
    }

    fn strictly_inside(&self, outer: &BeliefRegion) -> bool {
        outer.intercept.0 < self.intercept.0
            && self.intercept.1 < outer.intercept.1
            && outer.price.0 < self.price.0
            && self.price.1 < outer.price.1
    }
}

/// The projection facility: the admissible inner region, the outer region
/// that triggers a reset when left, and the reset point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefBox {
    pub inner: BeliefRegion,
    pub outer: BeliefRegion,
    pub reset: LinearBeliefs,
}

impl BeliefBox {
    pub fn new(inner: BeliefRegion, outer: BeliefRegion, reset: LinearBeliefs) -> Result<Self> {
        if !inner.strictly_inside(&outer) {
            return Err(Error::invalid(format!(
                "inner region {inner:?} must lie strictly inside outer region {outer:?}"
            )));
        }
        if !reset.is_finite() || !inner.strictly_contains(&reset) {
            return Err(Error::invalid(format!(
                "reset point {reset:?} must lie in the interior of {inner:?}"
            )));
        }
        Ok(BeliefBox {
            inner,
            outer,
            reset,
        })
    }

    /// Implied price within the price support, forecast quantity `β₀/2` in
    /// `[q_min, 1]`, each range widened by `margin` of its width for the
    /// outer region. The reset point implies the support midpoint and sells
    /// half the market.
    pub fn for_support(lo: f64, hi: f64, q_min: f64, margin: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi) {
            return Err(Error::invalid(format!("bad price support [{lo}, {hi}]")));
        }
        if !(q_min > 0.0 && q_min < 0.5) {
            return Err(Error::invalid(format!(
                "q_min must be in (0, 0.5), got {q_min}"
            )));
        }
        if !(margin > 0.0 && margin.is_finite()) {
            return Err(Error::invalid(format!(
                "margin must be positive, got {margin}"
            )));
        }
        let inner = BeliefRegion {
            intercept: (2.0 * q_min, 2.0),
            price: (lo, hi),
        };
        let widen = |(a, b): (f64, f64)| {
            let m = margin * (b - a);
            (a - m, b + m)
        };
        let outer = BeliefRegion {
            intercept: widen(inner.intercept),
            price: widen(inner.price),
        };
        let reset = LinearBeliefs::new(1.0, -1.0 / (lo + hi));
        Self::new(inner, outer, reset)
    }

    pub fn for_curve(curve: &DemandCurve) -> Result<Self> {
        Self::for_support(
            curve.support_lo(),
            curve.support_hi(),
            DEFAULT_Q_MIN,
            DEFAULT_BOX_MARGIN,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Nobody bought: the price was too high.
    NoSale,
    /// Everybody bought: the price was too low.
    SoldOut,
    Interior,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateStep {
    pub beliefs: LinearBeliefs,
    pub branch: Branch,
    pub projected: bool,
    pub forecast_error: f64,
}

/// One learning step from `beliefs` given this period's outcome.
pub fn update(
    beliefs: &LinearBeliefs,
    outcome: &MarketOutcome,
    gain: f64,
    spec: &PerturbationSpec,
    bbox: &BeliefBox,
) -> Result<UpdateStep> {
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(Error::invalid(format!("gain must be positive, got {gain}")));
    }
    let forecast_error = beliefs.forecast_error(outcome);
    let (branch, candidate) = if outcome.quantity == 0.0 {
        (
            Branch::NoSale,
            LinearBeliefs::new(beliefs.beta0 - gain, beliefs.beta1),
        )
    } else if outcome.quantity == 1.0 {
        (
            Branch::SoldOut,
            LinearBeliefs::new(beliefs.beta0 + gain, beliefs.beta1),
        )
    } else {
        let r = regression_matrix(beliefs, spec)?;
        let r_inv = r.inverse().ok_or(Error::SingularRegression)?;
        let dir = r_inv.mul_vec([1.0, outcome.price]);
        let step = gain * forecast_error;
        (
            Branch::Interior,
            LinearBeliefs::new(beliefs.beta0 + step * dir[0], beliefs.beta1 + step * dir[1]),
        )
    };
    let projected = !bbox.outer.contains(&candidate);
    Ok(UpdateStep {
        beliefs: if projected { bbox.reset } else { candidate },
        branch,
        projected,
        forecast_error,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearConfig {
    pub schedule: GainSchedule,
    pub perturbation: PerturbationSpec,
    pub belief_box: BeliefBox,
    pub n_buyers: usize,
    /// Starting beliefs; the box's reset point when `None`.
    pub initial: Option<LinearBeliefs>,
}

impl<'de> Deserialize<'de> for PerturbationSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            kind: PerturbationKind,
            epsilon: f64,
        }
        let raw = Raw::deserialize(d)?;
        PerturbationSpec::new(raw.kind, raw.epsilon).map_err(serde::de::Error::custom)
    }
}

impl LinearConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.n_buyers == 0 {
            return Err(Error::invalid("n_buyers must be at least 1"));
        }
        if self.perturbation.sigma1_sq() == 0.0 {
            return Err(Error::SingularRegression);
        }
        if let Some(init) = self.initial {
            if !self.belief_box.outer.contains(&init) {
                return Err(Error::invalid(format!(
                    "initial beliefs {init:?} lie outside the outer belief box"
                )));
            }
        }
        Ok(())
    }
}

/// One row of a per-period trace. Beliefs are the post-update values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub period: u64,
    pub beta0: f64,
    pub beta1: f64,
    pub implied_price: f64,
    pub posted_price: f64,
    pub quantity: f64,
    pub forecast_error: f64,
    pub projected: bool,
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "period,beta0,beta1,implied_price,posted_price,quantity,forecast_error,projected"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.period,
            r.beta0,
            r.beta1,
            r.implied_price,
            r.posted_price,
            r.quantity,
            r.forecast_error,
            u8::from(r.projected)
        )?;
    }
    Ok(())
}

/// Stateful learner: current beliefs plus the period counter.
#[derive(Clone, Debug)]
pub struct LinearLearner {
    config: LinearConfig,
    beliefs: LinearBeliefs,
    period: u64,
    projections: u64,
}

impl LinearLearner {
    pub fn new(config: LinearConfig) -> Result<Self> {
        config.validate()?;
        Ok(LinearLearner {
            beliefs: config.initial.unwrap_or(config.belief_box.reset),
            config,
            period: 0,
            projections: 0,
        })
    }

    pub fn beliefs(&self) -> LinearBeliefs {
        self.beliefs
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn projections(&self) -> u64 {
        self.projections
    }

    /// Perturb, trade, update.
    pub fn step<R: Rng + ?Sized>(&mut self, curve: &DemandCurve, rng: &mut R) -> Result<TraceRow> {
        let t = self.period + 1;
        let cfg = &self.config;
        let posted = perturbed_price(&self.beliefs, &cfg.perturbation, rng)?;
        let outcome = realize_demand(curve, posted, cfg.n_buyers, rng)?;
        let step = update(
            &self.beliefs,
            &outcome,
            cfg.schedule.gain_at(t),
            &cfg.perturbation,
            &cfg.belief_box,
        )?;
        self.beliefs = step.beliefs;
        self.period = t;
        self.projections += u64::from(step.projected);
        Ok(TraceRow {
            period: t,
            beta0: step.beliefs.beta0,
            beta1: step.beliefs.beta1,
            implied_price: step.beliefs.implied_price()?,
            posted_price: posted,
            quantity: outcome.quantity,
            forecast_error: step.forecast_error,
            projected: step.projected,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub final_beliefs: LinearBeliefs,
    pub final_forecast: Forecast,
    pub projections: u64,
    pub trace: Option<Vec<TraceRow>>,
}

pub fn run_episode<R: Rng + ?Sized>(
    curve: &DemandCurve,
    config: &LinearConfig,
    horizon: u64,
    rng: &mut R,
    trace: bool,
) -> Result<Episode> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let mut learner = LinearLearner::new(*config)?;
    let mut rows = trace.then(|| Vec::with_capacity(horizon.min(1 << 24) as usize));
    for _ in 0..horizon {
        let row = learner.step(curve, rng)?;
        if let Some(rows) = rows.as_mut() {
            rows.push(row);
        }
    }
    Ok(Episode {
        final_beliefs: learner.beliefs,
        final_forecast: learner.beliefs.forecast()?,
        projections: learner.projections,
        trace: rows,
    })
}

/// `⌈τ(μ) / a⌉` periods.
pub fn stop_time(mu: f64, a: f64, tau_of_mu: f64) -> Result<u64> {
    if !(mu > 0.0 && a > 0.0 && tau_of_mu > 0.0) || !(tau_of_mu / a).is_finite() {
        return Err(Error::invalid(format!(
            "stop_time needs positive finite inputs, got mu={mu}, a={a}, tau={tau_of_mu}"
        )));
    }
    Ok((tau_of_mu / a).ceil() as u64)
}

/// The clock time `c_τ · (-ln μ)`.
pub fn tau_log_linear(mu: f64, c_tau: f64) -> f64 {
    -c_tau * mu.ln()
}
