//! Learning a monopoly price with a deliberately wrong model.
//!
//! A seller facing `N` buyers with i.i.d. valuations drawn from an unknown
//! distribution `F` fits the linear demand curve `q = β₀ + β₁ p` by
//! constant-gain recursive least squares, posts the price that would be
//! optimal if that line were the truth, perturbs it slightly, and refits.
//! Although the linear model is misspecified, its implied price tracks the
//! true revenue-maximizing price `b*(F)` while remembering only two numbers.
//!
//! The crate is organised around that loop:
//!
//! - [`demand`]: valuation distributions, hazard-rate validation and the
//!   ground-truth optimal-price oracle.
//! - [`market`]: per-period buyer draws and realized quantities.
//! - [`linear_learner`]: the constant-gain (or decreasing-gain) learner with
//!   boundary corrections and a projection facility.
//! - [`empirical_learner`]: the non-parametric baseline that prices at the
//!   argmax of revenue under a recursively updated empirical cdf.
//! - [`ode`]: the mean-field ODE that the small-gain learner shadows, and
//!   contraction-rate estimates derived from it.
//! - [`harness`]: experiment sweeps, forecast-error statistics, empirical
//!   PAC certification and result files.
//!
//! ```
//! use demand_learning::demand::DemandCurve;
//!
//! let curve = DemandCurve::uniform(0.0, 1.0).unwrap();
//! let opt = curve.optimal_price(1e-8).unwrap();
//! assert!((opt.b_star - 0.5).abs() < 1e-8);
//! ```

// `!(x > 0.0)` guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod demand;
pub mod empirical_learner;
mod error;
pub mod harness;
pub mod linear_learner;
pub mod market;
pub mod ode;
pub mod rng;

pub use error::{Error, Result};

// The guide under `book/` is compiled as doctests so its snippets cannot rot.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/demand.md")]
    mod demand {}
    #[doc = include_str!("../../../book/src/market.md")]
    mod market {}
    #[doc = include_str!("../../../book/src/linear-learner.md")]
    mod linear_learner {}
    #[doc = include_str!("../../../book/src/empirical-learner.md")]
    mod empirical_learner {}
    #[doc = include_str!("../../../book/src/ode.md")]
    mod ode {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/certification.md")]
    mod certification {}
}
