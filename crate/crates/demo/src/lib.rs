//! Browser bindings for three interactive views of a two-state model:
//! the stationary density of the filter, the stability index across noise
//! levels, and one simulated pair of filters.
//!
//! Each export is a thin wrapper over a plain Rust function so the numbers
//! can be tested natively.

use wasm_bindgen::prelude::*;
use wonham_core::bounds::compute_bounds;
use wonham_core::filter::run_two_filters;
use wonham_core::lyapunov::gamma_distance_slope;
use wonham_core::model::{GeneratorMatrix, ModelSpec};
use wonham_core::simulate::{grid_steps, sample_chain, sample_observation, RngStream};
use wonham_core::twostate::{gamma_expansion_high_snr, gamma_expansion_low_snr, quadrature_summary, Density2D};
use wonham_core::{Error, Result};

/// Largest grid a browser call may simulate.
pub const MAX_STEPS: usize = 400_000;
/// Largest number of points returned for plotting.
pub const MAX_POINTS: usize = 2_000;

fn two_state(rate_12: f64, rate_21: f64, h1: f64, h2: f64, sigma: f64) -> Result<ModelSpec> {
    ModelSpec::stationary(GeneratorMatrix::two_state(rate_12, rate_21), vec![h1, h2], sigma)
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct DensityCurve {
    x: Vec<f64>,
    pdf: Vec<f64>,
    gamma: f64,
    lambda1: f64,
    lambda_sum: f64,
}

#[wasm_bindgen]
impl DensityCurve {
    #[wasm_bindgen(getter)]
    pub fn x(&self) -> Vec<f64> {
        self.x.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn pdf(&self) -> Vec<f64> {
        self.pdf.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    #[wasm_bindgen(getter)]
    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }
    #[wasm_bindgen(getter)]
    pub fn lambda_sum(&self) -> f64 {
        self.lambda_sum
    }
}

/// Normalized density of `π(1)` at `points` interior midpoints, with the
/// quadrature values of `γ`, `λ₁` and `λ₁ + λ₂`.
pub fn compute_density_curve(
    rate_12: f64,
    rate_21: f64,
    h1: f64,
    h2: f64,
    sigma: f64,
    points: usize,
) -> Result<DensityCurve> {
    let spec = two_state(rate_12, rate_21, h1, h2, sigma)?;
    let dens = Density2D::new(&spec)?;
    let summary = quadrature_summary(&spec)?;
    let n = points.clamp(2, MAX_POINTS);
    let x: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let pdf = x.iter().map(|&x| dens.pdf(x)).collect::<Result<_>>()?;
    Ok(DensityCurve {
        x,
        pdf,
        gamma: summary.gamma,
        lambda1: summary.lambda1,
        lambda_sum: summary.lambda_sum,
    })
}

#[wasm_bindgen]
pub fn density_curve(
    rate_12: f64,
    rate_21: f64,
    h1: f64,
    h2: f64,
    sigma: f64,
    points: usize,
) -> std::result::Result<DensityCurve, JsError> {
    compute_density_curve(rate_12, rate_21, h1, h2, sigma, points).map_err(js)
}

#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct GammaCurve {
    sigma: Vec<f64>,
    gamma: Vec<f64>,
    low_snr: Vec<f64>,
    high_snr: Vec<f64>,
    az: f64,
    spectral: f64,
}

#[wasm_bindgen]
impl GammaCurve {
    #[wasm_bindgen(getter)]
    pub fn sigma(&self) -> Vec<f64> {
        self.sigma.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn gamma(&self) -> Vec<f64> {
        self.gamma.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn low_snr(&self) -> Vec<f64> {
        self.low_snr.clone()
    }
    /// `NaN` where the small-noise expansion is out of regime.
    #[wasm_bindgen(getter)]
    pub fn high_snr(&self) -> Vec<f64> {
        self.high_snr.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn az(&self) -> f64 {
        self.az
    }
    #[wasm_bindgen(getter)]
    pub fn spectral(&self) -> f64 {
        self.spectral
    }
}

/// `γ(σ)` by quadrature on a log-spaced grid, with both expansions and the
/// noise-free bounds.
pub fn compute_gamma_curve(
    rate_12: f64,
    rate_21: f64,
    h1: f64,
    h2: f64,
    sigma_min: f64,
    sigma_max: f64,
    points: usize,
) -> Result<GammaCurve> {
    if !(sigma_min > 0.0 && sigma_max > sigma_min) {
        return Err(Error::InvalidArgument(format!("need 0 < sigma_min < sigma_max, got {sigma_min}, {sigma_max}")));
    }
    let base = two_state(rate_12, rate_21, h1, h2, sigma_min)?;
    let bounds = compute_bounds(&base)?;
    let n = points.clamp(2, MAX_POINTS);
    let ratio = (sigma_max / sigma_min).ln() / (n - 1) as f64;
    let mut curve = GammaCurve {
        sigma: Vec::with_capacity(n),
        gamma: Vec::with_capacity(n),
        low_snr: Vec::with_capacity(n),
        high_snr: Vec::with_capacity(n),
        az: bounds.az,
        spectral: bounds.spectral,
    };
    for i in 0..n {
        let spec = base.with_sigma(sigma_min * (ratio * i as f64).exp());
        let high = gamma_expansion_high_snr(&spec)?;
        curve.sigma.push(spec.sigma);
        curve.gamma.push(quadrature_summary(&spec)?.gamma);
        curve.low_snr.push(gamma_expansion_low_snr(&spec)?);
        curve.high_snr.push(if high.in_regime { high.value } else { f64::NAN });
    }
    Ok(curve)
}

#[wasm_bindgen]
pub fn gamma_curve(
    rate_12: f64,
    rate_21: f64,
    h1: f64,
    h2: f64,
    sigma_min: f64,
    sigma_max: f64,
    points: usize,
) -> std::result::Result<GammaCurve, JsError> {
    compute_gamma_curve(rate_12, rate_21, h1, h2, sigma_min, sigma_max, points).map_err(js)
}

#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct FilterSample {
    t: Vec<f64>,
    state: Vec<f64>,
    pi1: Vec<f64>,
    pibar1: Vec<f64>,
    log_dist: Vec<f64>,
    slope: f64,
    slope_error: f64,
    gamma: f64,
}

#[wasm_bindgen]
impl FilterSample {
    #[wasm_bindgen(getter)]
    pub fn t(&self) -> Vec<f64> {
        self.t.clone()
    }
    /// Hidden state as 1 or 2.
    #[wasm_bindgen(getter)]
    pub fn state(&self) -> Vec<f64> {
        self.state.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn pi1(&self) -> Vec<f64> {
        self.pi1.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn pibar1(&self) -> Vec<f64> {
        self.pibar1.clone()
    }
    /// `-Infinity` once the filters coincide exactly.
    #[wasm_bindgen(getter)]
    pub fn log_dist(&self) -> Vec<f64> {
        self.log_dist.clone()
    }
    /// Regression slope of `log_dist`; `NaN` when the window is too short.
    #[wasm_bindgen(getter)]
    pub fn slope(&self) -> f64 {
        self.slope
    }
    #[wasm_bindgen(getter)]
    pub fn slope_error(&self) -> f64 {
        self.slope_error
    }
    #[wasm_bindgen(getter)]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// Simulates the chain and two filters started at opposite corners, and
/// returns a thinned trace with the distance slope after `burn_in`.
#[allow(clippy::too_many_arguments)]
pub fn compute_filter_sample(
    rate_12: f64,
    rate_21: f64,
    h1: f64,
    h2: f64,
    sigma: f64,
    horizon: f64,
    dt: f64,
    burn_in: f64,
    seed: u64,
) -> Result<FilterSample> {
    let spec = two_state(rate_12, rate_21, h1, h2, sigma)?;
    let steps = grid_steps(horizon, dt)?;
    if steps > MAX_STEPS {
        return Err(Error::InvalidArgument(format!(
            "{steps} steps requested; the demo allows at most {MAX_STEPS}"
        )));
    }
    let stream = RngStream::new(seed, 0);
    let chain = sample_chain(&spec, horizon, &stream)?;
    let obs = sample_observation(&chain, &spec, dt, &stream)?;
    let run = run_two_filters(&obs, &spec, &[1.0, 0.0], &[0.0, 1.0])?;
    let (slope, slope_error) = match gamma_distance_slope(&run, burn_in) {
        Ok(e) => (e.value, e.std_error),
        Err(Error::InsufficientHorizon { .. } | Error::DegenerateRun) => (f64::NAN, f64::NAN),
        Err(e) => return Err(e),
    };
    let gamma = quadrature_summary(&spec).map(|s| s.gamma).unwrap_or(f64::NAN);

    let stride = steps.div_ceil(MAX_POINTS).max(1);
    let states = chain.grid_states(dt, steps);
    let mut sample = FilterSample {
        t: Vec::new(),
        state: Vec::new(),
        pi1: Vec::new(),
        pibar1: Vec::new(),
        log_dist: Vec::new(),
        slope,
        slope_error,
        gamma,
    };
    for k in (0..=steps).step_by(stride) {
        sample.t.push(k as f64 * dt);
        sample.state.push((states[k] + 1) as f64);
        sample.pi1.push(run.primary.pi_at(k)[0]);
        sample.pibar1.push(run.alternate.pi_at(k)[0]);
        sample.log_dist.push(run.log_dist[k]);
    }
    Ok(sample)
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn simulate_filter(
    rate_12: f64,
    rate_21: f64,
    h1: f64,
    h2: f64,
    sigma: f64,
    horizon: f64,
    dt: f64,
    burn_in: f64,
    seed: u32,
) -> std::result::Result<FilterSample, JsError> {
    compute_filter_sample(rate_12, rate_21, h1, h2, sigma, horizon, dt, burn_in, seed.into()).map_err(js)
}
