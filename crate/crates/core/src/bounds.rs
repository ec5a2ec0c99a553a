//! Closed-form bounds on the stability index and their comparison with
//! Monte Carlo estimates.

use std::fmt;

use crate::error::Result;
use crate::lyapunov::LyapunovEstimate;
use crate::model::{spectral_gap, stationary_distribution, ModelSpec};

/// Width of the one-sided tolerance, in standard errors.
pub const SE_MULTIPLIER: f64 = 3.0;
/// `σ` at or above which the spectral-gap bound is checked.
pub const LOW_SNR_SIGMA: f64 = 10.0;
/// Constant `C` in the `C/σ²` slack of the spectral-gap check.
pub const LOW_SNR_SLACK: f64 = 10.0;
/// `σ` at or below which the high-SNR limits are checked.
pub const HIGH_SNR_SIGMA: f64 = 0.2;
/// Relative slack around the high-SNR limits.
pub const HIGH_SNR_SLACK: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsReport {
    pub az: f64,
    pub mu_min: f64,
    /// Exponential rate of the non-asymptotic bound; its constant is unknown.
    pub bcl_rate: f64,
    pub spectral: f64,
    /// High-SNR upper limit of `σ²γ`.
    pub azu_limit: f64,
    /// High-SNR lower limit of `σ²γ`.
    pub azl_limit: f64,
}

impl BoundsReport {
    pub const CSV_HEADER: &'static str = "az,mu_min,bcl_rate,spectral,azu_limit,azl_limit";

    pub fn csv_row(&self) -> String {
        [self.az, self.mu_min, self.bcl_rate, self.spectral, self.azu_limit, self.azl_limit]
            .iter()
            .map(|v| format!("{v:.16e}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

pub fn compute_bounds(spec: &ModelSpec) -> Result<BoundsReport> {
    let g = &spec.generator;
    let d = g.dim();
    let mu = stationary_distribution(g)?.mu;
    let spectral = spectral_gap(g)?;

    let mut pair_min = f64::INFINITY;
    for i in 0..d {
        for j in i + 1..d {
            pair_min = pair_min.min((g.rate(i, j) * g.rate(j, i)).sqrt());
        }
    }
    let az = -2.0 * pair_min;

    let mu_min = -(0..d)
        .map(|i| mu[i] * (0..d).filter(|&j| j != i).map(|j| g.rate(i, j)).fold(f64::INFINITY, f64::min))
        .sum::<f64>();

    let h = &spec.h;
    let mut azu = 0.0;
    let mut azl = 0.0;
    for j in 0..d {
        let sq = |i: usize| (h[j] - h[i]).powi(2);
        let nearest = (0..d).filter(|&i| i != j).map(sq).fold(f64::INFINITY, f64::min);
        let all: f64 = (0..d).map(sq).sum();
        azu += mu[j] * nearest;
        azl += mu[j] * all;
    }

    Ok(BoundsReport {
        az,
        mu_min,
        bcl_rate: az,
        spectral,
        azu_limit: -0.5 * azu,
        azl_limit: -0.5 * azl,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Skipped => "SKIPPED",
        })
    }
}

/// One inequality between an estimate and a bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub bound: &'static str,
    /// Compared quantity: `γ̂` or `σ²γ̂`.
    pub observed: f64,
    pub lower: f64,
    pub upper: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyVerdict {
    pub checks: Vec<BoundCheck>,
}

impl ConsistencyVerdict {
    /// No check failed.
    pub fn consistent(&self) -> bool {
        self.checks.iter().all(|c| c.verdict != Verdict::Fail)
    }

    pub fn get(&self, bound: &str) -> Option<&BoundCheck> {
        self.checks.iter().find(|c| c.bound == bound)
    }
}

fn check(bound: &'static str, observed: f64, lower: f64, upper: f64, applicable: bool) -> BoundCheck {
    let verdict = if !applicable {
        Verdict::Skipped
    } else if observed >= lower && observed <= upper {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    BoundCheck {
        bound,
        observed,
        lower,
        upper,
        verdict,
    }
}

/// Compares a `γ` estimate obtained at noise level `sigma` with every bound.
pub fn check_bound_consistency(gamma: &LyapunovEstimate, sigma: f64, report: &BoundsReport) -> ConsistencyVerdict {
    let g = gamma.value;
    let tol = SE_MULTIPLIER * gamma.std_error;
    let s2 = sigma * sigma;
    let band = HIGH_SNR_SLACK * report.azl_limit.abs().max(report.azu_limit.abs()) + tol * s2;
    let checks = vec![
        check("az", g, f64::NEG_INFINITY, report.az + tol, report.az < 0.0),
        check("mu_min", g, f64::NEG_INFINITY, report.mu_min + tol, true),
        check(
            "spectral",
            g,
            f64::NEG_INFINITY,
            report.spectral + tol + LOW_SNR_SLACK / s2,
            sigma >= LOW_SNR_SIGMA,
        ),
        check(
            "high_snr",
            s2 * g,
            report.azl_limit - band,
            report.azu_limit + band,
            sigma <= HIGH_SNR_SIGMA,
        ),
    ];
    ConsistencyVerdict { checks }
}
