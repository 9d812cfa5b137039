//! Empirical certification of the learner's PAC guarantee.
//!
//! For each curve, the mean-field ODE gives the clock time `τ(μ)` needed to
//! bring the implied price within `μ` of `b*` from the hardest starting point
//! on a default grid. The learner is then run from that starting point for
//! `T = ⌈safety · τ(μ) / a⌉` periods in many independent trials, and the
//! fraction of trials ending farther than the radius from the target is
//! compared with `λ`. Over a family, the worst curve is reported.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use super::config::{LinearSpec, PacSpec, Radius};
use crate::demand::DemandCurve;
use crate::error::{Error, Result};
use crate::linear_learner::{stop_time, LinearBeliefs, LinearLearner};
use crate::ode::{default_initial_grid, estimate_contraction, ContractionOptions};
use crate::rng::stream_rng;

/// Confidence level of the one-sided binomial upper bound.
pub const CONFIDENCE: f64 = 0.95;

/// Stream ids for certification live above every sweep stream id.
const PAC_STREAM_BASE: u64 = 1 << 48;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub t: u64,
    pub failures: usize,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PacCertificate {
    pub mu: f64,
    pub lambda: f64,
    pub radius_kind: Radius,
    pub radius: f64,
    pub joint: bool,
    /// Family index of the worst curve.
    pub curve_index: usize,
    pub b_star: f64,
    pub q_star: f64,
    pub initial: LinearBeliefs,
    pub tau_of_mu: f64,
    pub t_used: u64,
    pub n_trials: usize,
    pub failures: usize,
    pub empirical_failure_rate: f64,
    /// One-sided Clopper-Pearson bound on the failure probability.
    pub upper_bound: f64,
    /// `upper_bound <= lambda`.
    pub passed: bool,
    /// Failure counts at `T/4`, `T/2` and `T` from the same trials.
    pub tail: Vec<TailPoint>,
    /// Fitted decay of the log failure rate per period.
    pub rho_hat: Option<f64>,
}

/// Exact one-sided upper confidence bound for a binomial proportion.
pub fn clopper_pearson_upper(failures: usize, trials: usize, confidence: f64) -> f64 {
    if failures >= trials {
        return 1.0;
    }
    let beta = Beta::new(failures as f64 + 1.0, (trials - failures) as f64)
        .expect("shape parameters are positive");
    beta.inverse_cdf(confidence)
}

/// Certifies `linear` over `curves`, reporting the worst curve.
pub fn pac_certify(
    curves: &[DemandCurve],
    linear: &LinearSpec,
    n_buyers: usize,
    spec: &PacSpec,
    seed: u64,
) -> Result<PacCertificate> {
    spec.validate()?;
    if curves.is_empty() {
        return Err(Error::invalid("no curves to certify"));
    }
    let mut worst: Option<PacCertificate> = None;
    for (index, curve) in curves.iter().enumerate() {
        let cert = certify_curve(index, curve, linear, n_buyers, spec, seed)?;
        log::info!(
            "pac curve {index}: T = {}, failure rate {:.4} (bound {:.4})",
            cert.t_used,
            cert.empirical_failure_rate,
            cert.upper_bound
        );
        if worst.as_ref().is_none_or(|w| cert.failures > w.failures) {
            worst = Some(cert);
        }
    }
    Ok(worst.expect("at least one curve"))
}

fn certify_curve(
    index: usize,
    curve: &DemandCurve,
    linear: &LinearSpec,
    n_buyers: usize,
    spec: &PacSpec,
    seed: u64,
) -> Result<PacCertificate> {
    let mut config = linear.config_for(curve, n_buyers)?;
    let a = config
        .schedule
        .constant_gain()
        .ok_or_else(|| Error::invalid("certification needs a constant gain schedule"))?;
    let opt = curve.optimal_price(1e-10)?;

    let candidates: Vec<LinearBeliefs> = match config.initial {
        Some(init) => vec![init],
        None => default_initial_grid(curve)?
            .into_iter()
            .filter(|b| config.belief_box.inner.contains(b))
            .collect(),
    };
    if candidates.is_empty() {
        return Err(Error::invalid(
            "no default starting point lies in the belief box",
        ));
    }
    let est = estimate_contraction(
        curve,
        &candidates,
        &[spec.mu],
        ContractionOptions::default(),
    )?;
    let entry = *est.entry(spec.mu).expect("requested level is tabulated");
    config.initial = Some(entry.initial);
    let tau = spec.safety * entry.tau.max(a);
    let t_used = stop_time(spec.mu, a, tau)?;
    let checkpoints = [t_used.div_ceil(4), t_used.div_ceil(2), t_used];
    let radius = spec.radius.times(spec.mu);

    let misses: Vec<[bool; 3]> = (0..spec.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let stream = PAC_STREAM_BASE | ((index as u64) << 24) | trial;
            let mut rng = stream_rng(seed, stream);
            let mut learner = LinearLearner::new(config)?;
            let mut out = [false; 3];
            let mut next = 0;
            while next < checkpoints.len() {
                learner.step(curve, &mut rng)?;
                while next < checkpoints.len() && learner.period() == checkpoints[next] {
                    let f = learner.beliefs().forecast()?;
                    out[next] = (f.price - opt.b_star).abs() > radius
                        || (spec.joint && (f.quantity - opt.q_star).abs() > radius);
                    next += 1;
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let n = spec.trials;
    let tail: Vec<TailPoint> = checkpoints
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let failures = misses.iter().filter(|m| m[i]).count();
            TailPoint {
                t,
                failures,
                rate: failures as f64 / n as f64,
            }
        })
        .collect();
    let failures = tail[2].failures;
    let upper_bound = clopper_pearson_upper(failures, n, CONFIDENCE);
    Ok(PacCertificate {
        mu: spec.mu,
        lambda: spec.lambda,
        radius_kind: spec.radius,
        radius,
        joint: spec.joint,
        curve_index: index,
        b_star: opt.b_star,
        q_star: opt.q_star,
        initial: entry.initial,
        tau_of_mu: entry.tau,
        t_used,
        n_trials: n,
        failures,
        empirical_failure_rate: failures as f64 / n as f64,
        upper_bound,
        passed: upper_bound <= spec.lambda,
        rho_hat: fit_decay(&tail, n),
        tail,
    })
}

/// Negated slope of `ln((k + 1/2) / (n + 1))` against `t`.
fn fit_decay(tail: &[TailPoint], n: usize) -> Option<f64> {
    let xs: Vec<f64> = tail.iter().map(|p| p.t as f64).collect();
    let ys: Vec<f64> = tail
        .iter()
        .map(|p| ((p.failures as f64 + 0.5) / (n as f64 + 1.0)).ln())
        .collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(-sxy / sxx)
}
