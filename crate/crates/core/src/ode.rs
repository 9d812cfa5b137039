//! Mean-field dynamics of the linear learner.
//!
//! With a small gain `a`, the belief path observed on the clock `τ = a t`
//! shadows the deterministic system
//!
//! ```text
//! β̇₀ = 1 - F(b) + b f(b) - β₀
//! β̇₁ = -f(b) - β₁
//! ```
//!
//! with `b = -β₀ / (2β₁)`, whose implied price obeys
//!
//! ```text
//! ḃ = -f(b) / (2β₁) · [(1 - F(b)) / f(b) - b]
//! ```
//!
//! For an increasing-hazard curve the bracket is positive below `b*` and
//! negative above it, so `b` moves monotonically toward `b*`.
//!
//! Outside the support the density vanishes and the learner only ever sees
//! `q = 1` (below) or `q = 0` (above). Its boundary branches then move `β₀`
//! by `±a` per period, so there the field is `(±1, 0)` and `ḃ = ∓1/(2β₁)`.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demand::DemandCurve;
use crate::error::{Error, Result};
use crate::linear_learner::{LinearBeliefs, LinearConfig, LinearLearner};
use crate::rng::stream_rng;

pub const DEFAULT_DT: f64 = 1e-3;

/// Integration stops early once every requested accuracy is reached, and
/// fails past this clock time.
pub const DEFAULT_TAU_MAX: f64 = 200.0;

/// States are kept at least this far inside `β₀ > 0`, `β₁ < 0`.
const ADMISSIBLE_EPS: f64 = 1e-9;

/// Additive slack in the exponential envelope; errors below it carry no
/// information about the rate.
pub const ENVELOPE_FLOOR: f64 = 1e-9;

fn price_of(beta: (f64, f64)) -> f64 {
    -beta.0 / (2.0 * beta.1)
}

/// `(β̇₀, β̇₁)` at `beta`.
pub fn beta_rhs(beta: (f64, f64), curve: &DemandCurve) -> Result<(f64, f64)> {
    if !(beta.1 < 0.0) || !beta.0.is_finite() {
        return Err(Error::invalid(format!(
            "beta_rhs needs finite beta0 and beta1 < 0, got {beta:?}"
        )));
    }
    Ok(field(beta, curve))
}

fn field(beta: (f64, f64), curve: &DemandCurve) -> (f64, f64) {
    let b = price_of(beta);
    let f = curve.pdf_unchecked(b);
    if f == 0.0 {
        let drift = if b <= curve.support_lo() { 1.0 } else { -1.0 };
        return (drift, 0.0);
    }
    let s = curve.survival_unchecked(b);
    (s + b * f - beta.0, -f - beta.1)
}

/// `ḃ` at price `b` with slope `beta1`.
pub fn b_rhs(b: f64, beta1: f64, curve: &DemandCurve) -> Result<f64> {
    if !(beta1 < 0.0) || !b.is_finite() {
        return Err(Error::invalid(format!(
            "b_rhs needs finite b and beta1 < 0, got b = {b}, beta1 = {beta1}"
        )));
    }
    let f = curve.pdf_unchecked(b);
    if f == 0.0 {
        let toward = if b <= curve.support_lo() { 1.0 } else { -1.0 };
        return Ok(-toward / (2.0 * beta1));
    }
    // -f/(2β₁) · [S/f - b], written without the division by f
    Ok(-(curve.survival_unchecked(b) - b * f) / (2.0 * beta1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeTrajectory {
    pub times: Vec<f64>,
    pub beta_path: Vec<(f64, f64)>,
    pub b_path: Vec<f64>,
    /// Steps after which the state had to be pulled back into `β₀ > 0`,
    /// `β₁ < 0`.
    pub clamp_events: u64,
}

impl OdeTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_price(&self) -> f64 {
        *self
            .b_path
            .last()
            .expect("trajectory holds the initial state")
    }

    /// CSV `tau,beta0,beta1,b`, keeping every `every`-th row and the last.
    pub fn write_csv<W: Write>(&self, mut out: W, every: usize) -> std::io::Result<()> {
        let every = every.max(1);
        writeln!(out, "tau,beta0,beta1,b")?;
        let last = self.len().saturating_sub(1);
        for i in (0..self.len()).filter(|&i| i % every == 0 || i == last) {
            let (b0, b1) = self.beta_path[i];
            writeln!(out, "{},{},{},{}", self.times[i], b0, b1, self.b_path[i])?;
        }
        Ok(())
    }
}

fn clamp_state(beta: (f64, f64)) -> ((f64, f64), bool) {
    let b0 = beta.0.max(ADMISSIBLE_EPS);
    let b1 = beta.1.min(-ADMISSIBLE_EPS);
    ((b0, b1), b0 != beta.0 || b1 != beta.1)
}

fn rk4_step(beta: (f64, f64), dt: f64, curve: &DemandCurve) -> (f64, f64) {
    let eval = |s: (f64, f64)| field(clamp_state(s).0, curve);
    let k1 = eval(beta);
    let k2 = eval((beta.0 + 0.5 * dt * k1.0, beta.1 + 0.5 * dt * k1.1));
    let k3 = eval((beta.0 + 0.5 * dt * k2.0, beta.1 + 0.5 * dt * k2.1));
    let k4 = eval((beta.0 + dt * k3.0, beta.1 + dt * k3.1));
    (
        beta.0 + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        beta.1 + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

/// Steps of a fixed-step integration, stopping when `stop` returns true.
fn integrate_until(
    beta_init: LinearBeliefs,
    curve: &DemandCurve,
    tau_end: f64,
    dt: f64,
    mut stop: impl FnMut(f64, f64) -> bool,
) -> Result<OdeTrajectory> {
    if !(dt > 0.0 && dt.is_finite() && tau_end > 0.0 && tau_end.is_finite()) {
        return Err(Error::invalid(format!(
            "need dt > 0 and tau_end > 0, got dt = {dt}, tau_end = {tau_end}"
        )));
    }
    let init = (beta_init.beta0, beta_init.beta1);
    if !(init.0 > 0.0 && init.1 < 0.0 && init.0.is_finite() && init.1.is_finite()) {
        return Err(Error::invalid(format!(
            "initial beliefs must have beta0 > 0 > beta1, got {beta_init:?}"
        )));
    }
    let steps = (tau_end / dt - 1e-9).ceil() as usize;
    let mut traj = OdeTrajectory {
        times: Vec::with_capacity(steps.min(1 << 22) + 1),
        beta_path: Vec::with_capacity(steps.min(1 << 22) + 1),
        b_path: Vec::with_capacity(steps.min(1 << 22) + 1),
        clamp_events: 0,
    };
    let mut beta = init;
    let mut push = |traj: &mut OdeTrajectory, tau: f64, beta: (f64, f64)| {
        let b = price_of(beta);
        traj.times.push(tau);
        traj.beta_path.push(beta);
        traj.b_path.push(b);
        stop(tau, b)
    };
    if push(&mut traj, 0.0, beta) {
        return Ok(traj);
    }
    for i in 1..=steps {
        let (next, clamped) = clamp_state(rk4_step(beta, dt, curve));
        beta = next;
        traj.clamp_events += u64::from(clamped);
        if push(&mut traj, i as f64 * dt, beta) {
            break;
        }
    }
    Ok(traj)
}

/// Fixed-step RK4 from `beta_init` to `tau_end`. The last step may overshoot
/// `tau_end` by less than `dt`.
pub fn integrate(
    beta_init: LinearBeliefs,
    curve: &DemandCurve,
    tau_end: f64,
    dt: f64,
) -> Result<OdeTrajectory> {
    integrate_until(beta_init, curve, tau_end, dt, |_, _| false)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauEntry {
    pub mu: f64,
    /// Worst-case first clock time with `|b(τ) - b*| <= μ`.
    pub tau: f64,
    /// Initial beliefs attaining the worst case.
    pub initial: LinearBeliefs,
}

/// Least-squares line `τ = intercept + slope · (-ln μ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
}

impl LogLinearFit {
    pub fn tau_at(&self, mu: f64) -> f64 {
        self.intercept - self.slope * mu.ln()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionEstimate {
    pub b_star: f64,
    /// Largest `c` with `|b(τ) - b*| <= e^{-cτ} |b(0) - b*|` on every path.
    pub c_hat: f64,
    /// Sorted by decreasing `μ`.
    pub tau_table: Vec<TauEntry>,
    /// `None` with fewer than two distinct accuracy levels.
    pub fit: Option<LogLinearFit>,
}

impl ContractionEstimate {
    /// Table lookup, or the fitted line for an untabulated `μ`.
    pub fn tau_of(&self, mu: f64) -> Option<f64> {
        self.tau_table
            .iter()
            .find(|e| e.mu == mu)
            .map(|e| e.tau)
            .or_else(|| self.fit.map(|f| f.tau_at(mu).max(0.0)))
    }

    pub fn entry(&self, mu: f64) -> Option<&TauEntry> {
        self.tau_table.iter().find(|e| e.mu == mu)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionOptions {
    pub dt: f64,
    pub tau_max: f64,
}

impl Default for ContractionOptions {
    fn default() -> Self {
        ContractionOptions {
            dt: DEFAULT_DT,
            tau_max: DEFAULT_TAU_MAX,
        }
    }
}

/// Starting beliefs spread over prices near both tails of `F` and over
/// intercepts from a tenth to twice the optimal `2q*`.
pub fn default_initial_grid(curve: &DemandCurve) -> Result<Vec<LinearBeliefs>> {
    let opt = curve.optimal_price(1e-10)?;
    let mut grid = Vec::new();
    for u in [0.01, 0.99] {
        let b0 = curve.inverse_cdf(u);
        for scale in [0.1, 1.0, 2.0] {
            grid.push(LinearBeliefs::with_implied_price(
                scale * 2.0 * opt.q_star,
                b0,
            )?);
        }
    }
    Ok(grid)
}

pub fn estimate_contraction(
    curve: &DemandCurve,
    initial_grid: &[LinearBeliefs],
    mu_grid: &[f64],
    options: ContractionOptions,
) -> Result<ContractionEstimate> {
    if initial_grid.is_empty() || mu_grid.is_empty() {
        return Err(Error::invalid(
            "need at least one initial point and one accuracy level",
        ));
    }
    if let Some(mu) = mu_grid.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
        return Err(Error::invalid(format!(
            "accuracy levels must be positive, got {mu}"
        )));
    }
    let report = curve.validate_ihr(curve.support_width() * 1e-4)?;
    if !report.is_ihr {
        return Err(Error::invalid("curve fails the increasing-hazard check"));
    }
    let b_star = curve.optimal_price(1e-10)?.b_star;
    let mut mus: Vec<f64> = mu_grid.to_vec();
    mus.sort_by(|a, b| b.total_cmp(a));
    mus.dedup();
    let mu_min = *mus.last().expect("nonempty");

    let mut c_hat = f64::INFINITY;
    let mut worst: Vec<Option<TauEntry>> = vec![None; mus.len()];
    for &init in initial_grid {
        let traj = integrate_until(init, curve, options.tau_max, options.dt, |_, b| {
            (b - b_star).abs() <= mu_min.min(ENVELOPE_FLOOR.max(mu_min * 1e-3))
        })?;
        let errs: Vec<f64> = traj.b_path.iter().map(|b| (b - b_star).abs()).collect();
        let e0 = errs[0];
        for (slot, &mu) in mus.iter().enumerate() {
            let hit = errs.iter().position(|&e| e <= mu).ok_or_else(|| {
                Error::Diagnostic(format!(
                    "no contraction to within {mu} of b* = {b_star} by tau = {} from {init:?}",
                    options.tau_max
                ))
            })?;
            let tau = traj.times[hit];
            if worst[slot].is_none_or(|w| tau > w.tau) {
                worst[slot] = Some(TauEntry {
                    mu,
                    tau,
                    initial: init,
                });
            }
        }
        if e0 > ENVELOPE_FLOOR {
            for (&t, &e) in traj.times.iter().zip(&errs).skip(1) {
                if e <= ENVELOPE_FLOOR {
                    break;
                }
                c_hat = c_hat.min(-(e / e0).ln() / t);
            }
        }
    }
    if !(c_hat > 0.0) {
        return Err(Error::Diagnostic(format!(
            "estimated contraction rate {c_hat} is not positive"
        )));
    }
    let tau_table: Vec<TauEntry> = worst.into_iter().map(|w| w.expect("filled")).collect();
    let fit = log_linear_fit(&tau_table);
    Ok(ContractionEstimate {
        b_star,
        c_hat,
        tau_table,
        fit,
    })
}

fn log_linear_fit(table: &[TauEntry]) -> Option<LogLinearFit> {
    if table.len() < 2 {
        return None;
    }
    let n = table.len() as f64;
    let xs: Vec<f64> = table.iter().map(|e| -e.mu.ln()).collect();
    let ys: Vec<f64> = table.iter().map(|e| e.tau).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Some(LogLinearFit {
        intercept: my - slope * mx,
        slope,
        r_squared,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleComparison {
    pub sup_deviation: f64,
    pub times: Vec<f64>,
    pub mean_b: Vec<f64>,
    pub ode_b: Vec<f64>,
}

/// Runs `n_seeds` learners for `⌈τ_end / a⌉` periods and compares their mean
/// implied price with the ODE path integrated at `dt = a`, so that period `t`
/// lines up with clock time `a t`.
pub fn compare_ensemble(
    curve: &DemandCurve,
    config: &LinearConfig,
    n_seeds: usize,
    tau_end: f64,
    master_seed: u64,
) -> Result<EnsembleComparison> {
    let a = config
        .schedule
        .constant_gain()
        .ok_or_else(|| Error::invalid("ensemble comparison needs a constant gain schedule"))?;
    if n_seeds == 0 {
        return Err(Error::invalid("need at least one seed"));
    }
    let start = config.initial.unwrap_or(config.belief_box.reset);
    let ode = integrate(start, curve, tau_end, a)?;
    let periods = ode.len() - 1;

    let paths: Vec<Vec<f64>> = (0..n_seeds as u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = stream_rng(master_seed, seed);
            learner_path(curve, config, periods, &mut rng)
        })
        .collect::<Result<_>>()?;

    let mut mean_b = vec![0.0; periods + 1];
    for path in &paths {
        for (m, b) in mean_b.iter_mut().zip(path) {
            *m += b;
        }
    }
    for m in &mut mean_b {
        *m /= n_seeds as f64;
    }
    let sup_deviation = mean_b
        .iter()
        .zip(&ode.b_path)
        .map(|(m, o)| (m - o).abs())
        .fold(0.0, f64::max);
    Ok(EnsembleComparison {
        sup_deviation,
        times: ode.times,
        mean_b,
        ode_b: ode.b_path,
    })
}

fn learner_path<R: Rng + ?Sized>(
    curve: &DemandCurve,
    config: &LinearConfig,
    periods: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut learner = LinearLearner::new(*config)?;
    let mut path = Vec::with_capacity(periods + 1);
    path.push(learner.beliefs().implied_price()?);
    for _ in 0..periods {
        path.push(learner.step(curve, rng)?.implied_price);
    }
    Ok(path)
}
