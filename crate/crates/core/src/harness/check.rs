use serde::{Deserialize, Serialize};

use super::config::CheckSpec;
use super::output::Summary;
use super::pac::PacCertificate;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn within(x: f64, (lo, hi): (f64, f64)) -> bool {
    lo <= x && x <= hi
}

fn outcome(name: &str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// Window checks on the sweep statistics and certificate checks.
pub fn run_checks(
    summary: &Summary,
    certificates: &[PacCertificate],
    spec: &CheckSpec,
) -> Vec<CheckOutcome> {
    let lin = &summary.linear;
    let mut out = vec![
        outcome(
            "linear error mean",
            within(lin.mean, spec.linear_mean),
            format!(
                "{:.5} in [{}, {}]",
                lin.mean, spec.linear_mean.0, spec.linear_mean.1
            ),
        ),
        outcome(
            "linear error variance",
            within(lin.variance, spec.linear_variance),
            format!(
                "{:.5} in [{}, {}]",
                lin.variance, spec.linear_variance.0, spec.linear_variance.1
            ),
        ),
    ];

    let mut by_k: Vec<_> = summary.baseline.iter().collect();
    by_k.sort_by_key(|b| b.reports_per_period);
    if let (Some(first), Some(last)) = (by_k.first(), by_k.last()) {
        let (v_first, v_last) = (first.stats.variance, last.stats.variance);
        out.push(outcome(
            "baseline variance, fewest reports",
            within(v_first, spec.baseline_first_variance),
            format!(
                "K = {}: {:.5} in [{}, {}]",
                first.reports_per_period,
                v_first,
                spec.baseline_first_variance.0,
                spec.baseline_first_variance.1
            ),
        ));
        out.push(outcome(
            "baseline variance, most reports",
            within(v_last, spec.baseline_last_variance),
            format!(
                "K = {}: {:.5} in [{}, {}]",
                last.reports_per_period,
                v_last,
                spec.baseline_last_variance.0,
                spec.baseline_last_variance.1
            ),
        ));
        if by_k.len() > 1 {
            let drops = by_k
                .windows(2)
                .filter(|w| w[1].stats.variance >= w[0].stats.variance)
                .count();
            out.push(outcome(
                "baseline variance ordering",
                v_first > v_last && drops <= 1,
                format!("endpoints {v_first:.5} > {v_last:.5}, {drops} adjacent reversal(s)"),
            ));
        }
        let ratio = v_first / lin.variance;
        out.push(outcome(
            "baseline vs linear variance",
            ratio > spec.min_variance_ratio,
            format!("ratio {ratio:.3} > {}", spec.min_variance_ratio),
        ));
    }

    for cert in certificates {
        out.push(outcome(
            "pac failure rate",
            cert.empirical_failure_rate <= cert.lambda,
            format!(
                "{:.4} <= {} at T = {} (upper bound {:.4}, certified: {})",
                cert.empirical_failure_rate,
                cert.lambda,
                cert.t_used,
                cert.upper_bound,
                cert.passed
            ),
        ));
        if let (Some(early), Some(late)) = (cert.tail.first(), cert.tail.last()) {
            out.push(outcome(
                "pac tail direction",
                early.rate > late.rate,
                format!(
                    "rate {:.4} at T = {} > {:.4} at T = {}",
                    early.rate, early.t, late.rate, late.t
                ),
            ));
        }
    }
    out
}
