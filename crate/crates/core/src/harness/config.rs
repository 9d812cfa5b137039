//! Sweep configuration, read from TOML.
//!
//! ```toml
//! seed = 7
//! n_buyers = 100
//! horizon = 300000
//!
//! [family]
//! kind = "truncated_gaussian"
//! mu = 10.0
//! sigma_min = 11.0
//! sigma_max = 16.0
//! points = 200
//!
//! [linear]
//! schedule = { kind = "constant", a = 0.0001 }
//! epsilon = 0.75
//! perturbation = "binary_points"
//!
//! [baseline]
//! reports_per_period = [2, 4, 6, 8, 10]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::demand::DemandCurve;
use crate::empirical_learner::DEFAULT_GRID_FRACTION;
use crate::error::{Error, Result};
use crate::linear_learner::{
    BeliefBox, GainSchedule, LinearBeliefs, LinearConfig, PerturbationKind, PerturbationSpec,
    DEFAULT_BOX_MARGIN, DEFAULT_Q_MIN,
};

pub const DEFAULT_HISTOGRAM_BIN: f64 = 0.01;

/// At most this many replications per point fit in the stream id layout.
pub const MAX_REPLICATIONS: u32 = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub seed: u64,
    #[serde(default = "default_n_buyers")]
    pub n_buyers: usize,
    pub horizon: u64,
    /// Independent episodes per family point.
    #[serde(default = "default_replications")]
    pub replications: u32,
    #[serde(default = "default_histogram_bin")]
    pub histogram_bin: f64,
    pub family: FamilySpec,
    pub linear: LinearSpec,
    #[serde(default)]
    pub baseline: BaselineSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pac: Option<PacSpec>,
    #[serde(default)]
    pub check: CheckSpec,
}

fn default_n_buyers() -> usize {
    100
}

fn default_replications() -> u32 {
    1
}

fn default_histogram_bin() -> f64 {
    DEFAULT_HISTOGRAM_BIN
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    /// Half-normal curves with `points` standard deviations spaced evenly
    /// over `[sigma_min, sigma_max]`, endpoints included.
    TruncatedGaussian {
        mu: f64,
        sigma_min: f64,
        sigma_max: f64,
        points: usize,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Two-column `(price, cdf)` knot file; relative paths resolve against
    /// the config file's directory.
    Tabulated {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct FamilyPoint {
    pub index: usize,
    pub sigma: Option<f64>,
    pub curve: DemandCurve,
}

impl FamilySpec {
    pub fn len(&self) -> usize {
        match self {
            FamilySpec::TruncatedGaussian { points, .. } => *points,
            _ => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sigmas(&self) -> Vec<f64> {
        match *self {
            FamilySpec::TruncatedGaussian {
                sigma_min,
                sigma_max,
                points,
                ..
            } => (0..points)
                .map(|i| {
                    if points == 1 {
                        sigma_min
                    } else {
                        sigma_min + (sigma_max - sigma_min) * i as f64 / (points - 1) as f64
                    }
                })
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn curves(&self) -> Result<Vec<FamilyPoint>> {
        match self {
            FamilySpec::TruncatedGaussian { mu, .. } => self
                .sigmas()
                .into_iter()
                .enumerate()
                .map(|(index, sigma)| {
                    Ok(FamilyPoint {
                        index,
                        sigma: Some(sigma),
                        curve: DemandCurve::truncated_gaussian(*mu, sigma)?,
                    })
                })
                .collect(),
            FamilySpec::Uniform { lo, hi } => Ok(vec![FamilyPoint {
                index: 0,
                sigma: None,
                curve: DemandCurve::uniform(*lo, *hi)?,
            }]),
            FamilySpec::Tabulated { path } => Ok(vec![FamilyPoint {
                index: 0,
                sigma: None,
                curve: DemandCurve::tabulated_from_file(path)?,
            }]),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            FamilySpec::TruncatedGaussian {
                mu,
                sigma_min,
                sigma_max,
                points,
            } => {
                if points == 0 {
                    return Err(Error::Config("family.points must be at least 1".into()));
                }
                if !(mu.is_finite() && mu >= 0.0) {
                    return Err(Error::Config(format!("family.mu must be >= 0, got {mu}")));
                }
                if !(sigma_min > 0.0 && sigma_min <= sigma_max && sigma_max.is_finite()) {
                    return Err(Error::Config(format!(
                        "need 0 < sigma_min <= sigma_max, got [{sigma_min}, {sigma_max}]"
                    )));
                }
                Ok(())
            }
            FamilySpec::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi) {
                    return Err(Error::Config(format!(
                        "need 0 <= lo < hi, got [{lo}, {hi}]"
                    )));
                }
                Ok(())
            }
            FamilySpec::Tabulated { .. } => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSpec {
    pub schedule: GainSchedule,
    pub epsilon: f64,
    #[serde(default = "default_perturbation")]
    pub perturbation: PerturbationKind,
    #[serde(default = "default_q_min")]
    pub q_min: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<LinearBeliefs>,
}

fn default_perturbation() -> PerturbationKind {
    PerturbationKind::UniformInterval
}

fn default_q_min() -> f64 {
    DEFAULT_Q_MIN
}

fn default_margin() -> f64 {
    DEFAULT_BOX_MARGIN
}

impl LinearSpec {
    pub fn config_for(&self, curve: &DemandCurve, n_buyers: usize) -> Result<LinearConfig> {
        let config = LinearConfig {
            schedule: self.schedule,
            perturbation: PerturbationSpec::new(self.perturbation, self.epsilon)?,
            belief_box: BeliefBox::for_support(
                curve.support_lo(),
                curve.support_hi(),
                self.q_min,
                self.margin,
            )?,
            n_buyers,
            initial: self.initial,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSpec {
    /// Valuation reports per period, one baseline episode per entry.
    #[serde(default = "default_reports")]
    pub reports_per_period: Vec<usize>,
    /// Grid spacing as a fraction of each curve's support width.
    #[serde(default = "default_grid_fraction")]
    pub grid_fraction: f64,
}

fn default_reports() -> Vec<usize> {
    vec![2, 4, 6, 8, 10]
}

fn default_grid_fraction() -> f64 {
    DEFAULT_GRID_FRACTION
}

impl Default for BaselineSpec {
    fn default() -> Self {
        BaselineSpec {
            reports_per_period: default_reports(),
            grid_fraction: default_grid_fraction(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Radius {
    /// Failure means missing by more than `4μ`.
    FourMu,
    /// Failure means missing by more than `μ`.
    Mu,
}

impl Radius {
    pub fn times(&self, mu: f64) -> f64 {
        match self {
            Radius::FourMu => 4.0 * mu,
            Radius::Mu => mu,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacSpec {
    pub mu: f64,
    pub lambda: f64,
    pub trials: usize,
    /// Multiplier on the ODE clock time `τ(μ)` before converting to periods.
    #[serde(default = "default_safety")]
    pub safety: f64,
    #[serde(default = "default_radius")]
    pub radius: Radius,
    /// Also count misses of the quantity forecast `β₀/2` against `q*`.
    #[serde(default)]
    pub joint: bool,
}

fn default_safety() -> f64 {
    2.0
}

fn default_radius() -> Radius {
    Radius::FourMu
}

impl PacSpec {
    pub fn new(mu: f64, lambda: f64, trials: usize) -> Self {
        PacSpec {
            mu,
            lambda,
            trials,
            safety: default_safety(),
            radius: default_radius(),
            joint: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::Config(format!(
                "pac.mu must be positive, got {}",
                self.mu
            )));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Config(format!(
                "pac.lambda must be in (0, 1), got {}",
                self.lambda
            )));
        }
        if self.trials == 0 {
            return Err(Error::Config("pac.trials must be at least 1".into()));
        }
        if !(self.safety > 0.0 && self.safety.is_finite()) {
            return Err(Error::Config(format!(
                "pac.safety must be positive, got {}",
                self.safety
            )));
        }
        if (self.trials as f64) < 50.0 / self.lambda {
            log::warn!(
                "pac.trials = {} is below the recommended 50 / lambda = {:.0}",
                self.trials,
                50.0 / self.lambda
            );
        }
        Ok(())
    }

    /// Parses `mu=<f>,lambda=<f>,trials=<n>` with optional `safety=<f>`,
    /// `radius=four_mu|mu` and `joint=true|false`.
    pub fn parse_flag(s: &str) -> Result<Self> {
        let (mut mu, mut lambda, mut trials) = (None, None, None);
        let mut spec = PacSpec::new(0.0, 0.0, 0);
        let bad = |part: &str| Error::Config(format!("bad --pac entry `{part}`"));
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part.split_once('=').ok_or_else(|| bad(part))?;
            match key.trim() {
                "mu" => mu = Some(value.trim().parse::<f64>().map_err(|_| bad(part))?),
                "lambda" => lambda = Some(value.trim().parse::<f64>().map_err(|_| bad(part))?),
                "trials" => trials = Some(value.trim().parse::<usize>().map_err(|_| bad(part))?),
                "safety" => spec.safety = value.trim().parse().map_err(|_| bad(part))?,
                "joint" => spec.joint = value.trim().parse().map_err(|_| bad(part))?,
                "radius" => {
                    spec.radius = match value.trim() {
                        "four_mu" | "4mu" => Radius::FourMu,
                        "mu" => Radius::Mu,
                        _ => return Err(bad(part)),
                    }
                }
                _ => return Err(bad(part)),
            }
        }
        spec.mu = mu.ok_or_else(|| Error::Config("--pac needs mu=".into()))?;
        spec.lambda = lambda.ok_or_else(|| Error::Config("--pac needs lambda=".into()))?;
        spec.trials = trials.ok_or_else(|| Error::Config("--pac needs trials=".into()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Acceptance windows applied by `run --check`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSpec {
    pub linear_mean: (f64, f64),
    pub linear_variance: (f64, f64),
    /// Window for the baseline with the fewest reports per period.
    pub baseline_first_variance: (f64, f64),
    /// Window for the baseline with the most reports per period.
    pub baseline_last_variance: (f64, f64),
    /// Required `variance(baseline, fewest reports) / variance(linear)`.
    pub min_variance_ratio: f64,
}

impl Default for CheckSpec {
    fn default() -> Self {
        CheckSpec {
            linear_mean: (-0.05, 0.10),
            linear_variance: (0.001, 0.01),
            baseline_first_variance: (0.004, 0.03),
            baseline_last_variance: (0.001, 0.01),
            min_variance_ratio: 1.5,
        }
    }
}

impl SweepConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: SweepConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: SweepConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let FamilySpec::Tabulated { path: knots } = &mut config.family {
            if knots.is_relative() {
                if let Some(dir) = path.parent() {
                    *knots = dir.join(&*knots);
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        if self.n_buyers == 0 {
            return cfg("n_buyers must be at least 1".into());
        }
        if self.horizon == 0 {
            return cfg("horizon must be at least 1".into());
        }
        if self.replications == 0 || self.replications > MAX_REPLICATIONS {
            return cfg(format!(
                "replications must be in 1..={MAX_REPLICATIONS}, got {}",
                self.replications
            ));
        }
        if !(self.histogram_bin > 0.0 && self.histogram_bin.is_finite()) {
            return cfg(format!(
                "histogram_bin must be positive, got {}",
                self.histogram_bin
            ));
        }
        self.family.validate()?;
        self.linear
            .schedule
            .validate()
            .map_err(|e| Error::Config(format!("linear.schedule: {e}")))?;
        if !(self.linear.epsilon > 0.0 && self.linear.epsilon.is_finite()) {
            return cfg(format!(
                "linear.epsilon must be positive, got {}",
                self.linear.epsilon
            ));
        }
        if self.baseline.reports_per_period.contains(&0) {
            return cfg("baseline.reports_per_period entries must be at least 1".into());
        }
        if self.baseline.reports_per_period.len() >= 255 {
            return cfg("at most 254 baseline entries are supported".into());
        }
        let g = self.baseline.grid_fraction;
        if !(g > 0.0 && g <= 1.0) {
            return cfg(format!("baseline.grid_fraction must be in (0, 1], got {g}"));
        }
        if let Some(pac) = &self.pac {
            pac.validate()?;
        }
        Ok(())
    }

    /// Multiplies the number of family points by `scale`, keeping at least one.
    pub fn scaled(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Config(format!(
                "scale must be positive, got {scale}"
            )));
        }
        if let FamilySpec::TruncatedGaussian { points, .. } = &mut self.family {
            *points = ((*points as f64 * scale).round() as usize).max(1);
        }
        Ok(self)
    }

    /// The full experiment: 5000 curves, `T = 300,000`, `a = 0.0001`,
    /// `ε = 0.75`, binary perturbation, `N = 100`.
    pub fn full(seed: u64) -> Self {
        SweepConfig {
            seed,
            n_buyers: 100,
            horizon: 300_000,
            replications: 1,
            histogram_bin: DEFAULT_HISTOGRAM_BIN,
            family: FamilySpec::TruncatedGaussian {
                mu: 10.0,
                sigma_min: 11.0,
                sigma_max: 16.0,
                points: 5000,
            },
            linear: LinearSpec {
                schedule: GainSchedule::Constant { a: 1e-4 },
                epsilon: 0.75,
                perturbation: PerturbationKind::BinaryPoints,
                q_min: DEFAULT_Q_MIN,
                margin: DEFAULT_BOX_MARGIN,
                initial: None,
            },
            baseline: BaselineSpec::default(),
            pac: None,
            check: CheckSpec::default(),
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        seed = 3
        horizon = 10
        [family]
        kind = "uniform"
        lo = 0.0
        hi = 1.0
        [linear]
        schedule = { kind = "constant", a = 0.001 }
        epsilon = 0.05
    "#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = SweepConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.n_buyers, 100);
        assert_eq!(c.replications, 1);
        assert_eq!(c.linear.perturbation, PerturbationKind::UniformInterval);
        assert_eq!(c.baseline.reports_per_period, vec![2, 4, 6, 8, 10]);
        assert_eq!(c.family.curves().unwrap().len(), 1);
    }

    #[test]
    fn rejects_bad_values() {
        for (from, to) in [
            ("horizon = 10", "horizon = 0"),
            ("epsilon = 0.05", "epsilon = 0.0"),
            ("a = 0.001", "a = -1.0"),
            ("hi = 1.0", "hi = -1.0"),
            ("seed = 3", "seed = 3\nbogus = 1"),
        ] {
            let text = MINIMAL.replace(from, to);
            assert!(
                matches!(SweepConfig::from_toml_str(&text), Err(Error::Config(_))),
                "{to}"
            );
        }
    }

    #[test]
    fn sigma_grid_is_inclusive_and_scales() {
        let c = SweepConfig::full(1).scaled(0.04).unwrap();
        let s = c.family.sigmas();
        assert_eq!(s.len(), 200);
        assert_eq!(s[0], 11.0);
        assert_eq!(*s.last().unwrap(), 16.0);
        assert_eq!(SweepConfig::full(1).scaled(1e-9).unwrap().family.len(), 1);
    }

    #[test]
    fn full_config_round_trips_through_toml() {
        let c = SweepConfig::full(42);
        let back = SweepConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn pac_flag_parsing() {
        let p = PacSpec::parse_flag("mu=0.05,lambda=0.1,trials=1000").unwrap();
        assert_eq!((p.mu, p.lambda, p.trials), (0.05, 0.1, 1000));
        assert_eq!(p.radius, Radius::FourMu);
        let p =
            PacSpec::parse_flag("mu=0.1, lambda=0.2, trials=300, radius=mu, joint=true").unwrap();
        assert_eq!(p.radius, Radius::Mu);
        assert!(p.joint);
        assert!(PacSpec::parse_flag("mu=0.1,lambda=2,trials=10").is_err());
        assert!(PacSpec::parse_flag("mu=0.1,trials=10").is_err());
        assert!(PacSpec::parse_flag("mu=x,lambda=0.1,trials=10").is_err());
    }
}
