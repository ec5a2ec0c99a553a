//! Monte Carlo estimators of the top Lyapunov exponent `λ₁`, of `λ₁ + λ₂`
//! and of the stability index `γ`.
//!
//! Every estimator works on the post-burn-in window of a single run.
//! Ergodic averages get a batch-means standard error; growth rates are
//! least-squares slopes whose standard error is propagated from batch
//! increments. Replications are combined with [`pool`].

use std::fmt;

use crate::error::{Error, Result};
use crate::filter::{wedge_log_norm, FilterTrajectory, TwoFilterRun};
use crate::model::{spectral_gap, ModelSpec};
use crate::simulate::ChainPath;

/// Batch length, in time units, for all standard errors.
pub const BATCH_LENGTH: f64 = 1.0;

/// Minimum post-burn-in window for the distance slope.
pub const MIN_DISTANCE_WINDOW: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    FkPathwise,
    FkStationary,
    LogNormSlope,
    WedgeSlope,
    DistanceSlope,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::FkPathwise => "fk_pathwise",
            Method::FkStationary => "fk_stationary",
            Method::LogNormSlope => "log_norm_slope",
            Method::WedgeSlope => "wedge_slope",
            Method::DistanceSlope => "distance_slope",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovEstimate {
    /// Rate in 1/time.
    pub value: f64,
    pub std_error: f64,
    pub horizon: f64,
    pub burn_in: f64,
    pub method: Method,
    pub replications: usize,
}

impl LyapunovEstimate {
    /// `|self - other| / sqrt(se₁² + se₂²)`.
    pub fn z_score(&self, other: &LyapunovEstimate) -> f64 {
        (self.value - other.value).abs() / self.std_error.hypot(other.std_error)
    }

    /// `|self - reference| / se`.
    pub fn z_against(&self, reference: f64) -> f64 {
        (self.value - reference).abs() / self.std_error
    }
}

/// `10 / |γ_max(Λ)|`: ten relaxation times of the chain.
pub fn default_burn_in(spec: &ModelSpec) -> Result<f64> {
    Ok(10.0 / spectral_gap(&spec.generator)?.abs())
}

/// Post-burn-in grid window `[start, end]` cut to whole batches.
#[derive(Debug, Clone, Copy)]
struct Window {
    start: usize,
    end: usize,
    batch: usize,
}

impl Window {
    fn new(dt: f64, steps: usize, burn_in: f64) -> Result<Self> {
        let horizon = dt * steps as f64;
        let insufficient = || Error::InsufficientHorizon { horizon, burn_in };
        if !(burn_in >= 0.0) || horizon <= burn_in {
            return Err(insufficient());
        }
        let start = (burn_in / dt - 1e-9).ceil() as usize;
        let batch = ((BATCH_LENGTH / dt).round() as usize).max(1);
        let batches = (steps - start) / batch;
        if batches < 2 {
            return Err(insufficient());
        }
        Ok(Self {
            start,
            end: start + batches * batch,
            batch,
        })
    }

    fn batches(&self) -> usize {
        (self.end - self.start) / self.batch
    }
}

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Mean of `term(k)` over `k ∈ [start, end)` with a batch-means standard error.
fn batch_average(w: &Window, term: impl Fn(usize) -> f64) -> (f64, f64) {
    let means: Vec<f64> = (0..w.batches())
        .map(|b| {
            let lo = w.start + b * w.batch;
            (lo..lo + w.batch).map(&term).sum::<f64>() / w.batch as f64
        })
        .collect();
    let mean = means.iter().sum::<f64>() / means.len() as f64;
    (mean, (sample_variance(&means) / means.len() as f64).sqrt())
}

/// Least-squares slope of `y_k` against `t_k = k dt` on the window.
///
/// The slope is a linear functional `Σ_j c_j Δy_j` of the increments.
/// Grouping increments by batch and treating batch sums as uncorrelated
/// gives `Var ≈ s_b² Σ_b c̄_b²` with `s_b²` the variance of batch sums.
fn regression_slope(y: &[f64], dt: f64, w: &Window) -> (f64, f64) {
    let n = (w.end - w.start + 1) as f64;
    let k_mean = (w.start + w.end) as f64 / 2.0;
    let sxx: f64 = (w.start..=w.end).map(|k| (k as f64 - k_mean).powi(2)).sum::<f64>() * dt * dt;
    let y_mean = y[w.start..=w.end].iter().sum::<f64>() / n;
    let slope = (w.start..=w.end)
        .map(|k| (k as f64 - k_mean) * dt * (y[k] - y_mean))
        .sum::<f64>()
        / sxx;

    // c_j = Σ_{k ≥ j} (t_k - t̄)/Sxx for the increment y_j - y_{j-1}
    let mut c = vec![0.0; w.end - w.start + 2];
    for k in (w.start + 1..=w.end).rev() {
        let idx = k - w.start;
        c[idx] = c[idx + 1] + (k as f64 - k_mean) * dt / sxx;
    }
    let mut sums = Vec::with_capacity(w.batches());
    let mut weights = Vec::with_capacity(w.batches());
    for b in 0..w.batches() {
        let lo = w.start + b * w.batch;
        sums.push(y[lo + w.batch] - y[lo]);
        let cbar = (lo + 1..=lo + w.batch).map(|j| c[j - w.start]).sum::<f64>() / w.batch as f64;
        weights.push(cbar * cbar);
    }
    let se = (sample_variance(&sums) * weights.iter().sum::<f64>()).sqrt();
    (slope, se)
}

fn estimate(value: f64, std_error: f64, dt: f64, w: &Window, burn_in: f64, method: Method) -> LyapunovEstimate {
    LyapunovEstimate {
        value,
        std_error,
        horizon: dt * w.end as f64,
        burn_in,
        method,
        replications: 1,
    }
}

/// Time average of `σ⁻²(π_k(h) h̄_k − ½ π_k(h)²)` along the true signal,
/// where `h̄_k` is the exact average of `h(X_s)` over step `k`.
pub fn lambda1_fk_pathwise(traj: &FilterTrajectory, chain: &ChainPath, burn_in: f64) -> Result<LyapunovEstimate> {
    let spec = &traj.spec;
    let w = Window::new(traj.dt, traj.steps(), burn_in)?;
    let drift = chain.step_integrals(&spec.h, traj.dt, traj.steps());
    let s2 = spec.sigma * spec.sigma;
    let (value, se) = batch_average(&w, |k| {
        let m = spec.mean_h(traj.pi_at(k));
        (m * drift[k] / traj.dt - 0.5 * m * m) / s2
    });
    Ok(estimate(value, se, traj.dt, &w, burn_in, Method::FkPathwise))
}

/// `(2σ²)⁻¹` times the time average of `π_k(h)²`.
pub fn lambda1_fk_stationary(traj: &FilterTrajectory, burn_in: f64) -> Result<LyapunovEstimate> {
    let spec = &traj.spec;
    let w = Window::new(traj.dt, traj.steps(), burn_in)?;
    let s2 = spec.sigma * spec.sigma;
    let (value, se) = batch_average(&w, |k| {
        let m = spec.mean_h(traj.pi_at(k));
        m * m / (2.0 * s2)
    });
    Ok(estimate(value, se, traj.dt, &w, burn_in, Method::FkStationary))
}

/// Growth rate of `log|ρ_t|`.
pub fn lambda1_log_norm(traj: &FilterTrajectory, burn_in: f64) -> Result<LyapunovEstimate> {
    let w = Window::new(traj.dt, traj.steps(), burn_in)?;
    let (slope, se) = regression_slope(&traj.log_norm, traj.dt, &w);
    Ok(estimate(slope, se, traj.dt, &w, burn_in, Method::LogNormSlope))
}

/// Growth rate of `log|ρ_t ∧ ρ̄_t|`. For two states this is `λ₁ + λ₂`;
/// for more states it is an upper-rate estimate.
pub fn lambda_sum_wedge(run: &TwoFilterRun, burn_in: f64) -> Result<LyapunovEstimate> {
    if run.nu == run.nu_bar {
        return Err(Error::DegenerateWedge);
    }
    let p = &run.primary;
    let w = Window::new(p.dt, p.steps(), burn_in)?;
    let wedge = wedge_log_norm(run);
    if wedge[w.start..=w.end].iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateWedge);
    }
    let (slope, se) = regression_slope(&wedge, p.dt, &w);
    Ok(estimate(slope, se, p.dt, &w, burn_in, Method::WedgeSlope))
}

/// Exponential rate of `|π_t − π̄_t|`.
pub fn gamma_distance_slope(run: &TwoFilterRun, burn_in: f64) -> Result<LyapunovEstimate> {
    let p = &run.primary;
    let w = Window::new(p.dt, p.steps(), burn_in)?;
    if p.dt * ((w.end - w.start) as f64) < MIN_DISTANCE_WINDOW {
        return Err(Error::InsufficientHorizon {
            horizon: p.horizon(),
            burn_in,
        });
    }
    if run.log_dist[w.start..=w.end].iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateRun);
    }
    let (slope, se) = regression_slope(&run.log_dist, p.dt, &w);
    Ok(estimate(slope, se, p.dt, &w, burn_in, Method::DistanceSlope))
}

/// Time averages of `g(X_k, π_k)` and of its filtered counterpart
/// `Σ_i π_k(i) g(i, π_k)` over the same window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErgodicComparison {
    pub pathwise: f64,
    pub filtered: f64,
    /// Batch-means standard error of `pathwise − filtered`.
    pub difference_se: f64,
}

impl ErgodicComparison {
    pub fn z_score(&self) -> f64 {
        let diff = self.pathwise - self.filtered;
        if diff == 0.0 {
            0.0
        } else {
            diff.abs() / self.difference_se
        }
    }
}

/// Compares the two time averages of a test function `g(state, π)`.
pub fn ergodic_average_identity(
    traj: &FilterTrajectory,
    chain: &ChainPath,
    burn_in: f64,
    g: impl Fn(usize, &[f64]) -> f64,
) -> Result<ErgodicComparison> {
    let w = Window::new(traj.dt, traj.steps(), burn_in)?;
    let states = chain.grid_states(traj.dt, traj.steps());
    let pathwise = |k: usize| g(states[k], traj.pi_at(k));
    let filtered = |k: usize| {
        let pi = traj.pi_at(k);
        pi.iter().enumerate().map(|(i, p)| p * g(i, pi)).sum::<f64>()
    };
    let (a, _) = batch_average(&w, pathwise);
    let (b, _) = batch_average(&w, filtered);
    let (_, se) = batch_average(&w, |k| pathwise(k) - filtered(k));
    Ok(ErgodicComparison {
        pathwise: a,
        filtered: b,
        difference_se: se,
    })
}

/// Replication-pooled estimate with the between-replication spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pooled {
    pub estimate: LyapunovEstimate,
    /// Standard deviation of the per-replication values.
    pub spread: f64,
}

/// Mean across replications; the standard error is the between-replication
/// standard deviation over `√R`. A single replication keeps its own error.
pub fn pool(estimates: &[LyapunovEstimate]) -> Result<Pooled> {
    let first = estimates
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to pool".into()))?;
    let r = estimates.len();
    let values: Vec<f64> = estimates.iter().map(|e| e.value).collect();
    let mean = values.iter().sum::<f64>() / r as f64;
    let (se, spread) = if r == 1 {
        (first.std_error, 0.0)
    } else {
        let sd = sample_variance(&values).sqrt();
        (sd / (r as f64).sqrt(), sd)
    };
    Ok(Pooled {
        estimate: LyapunovEstimate {
            value: mean,
            std_error: se,
            replications: estimates.iter().map(|e| e.replications).sum(),
            ..*first
        },
        spread,
    })
}
