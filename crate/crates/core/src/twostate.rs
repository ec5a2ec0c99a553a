//! Two-state closed forms: the stationary law of the filter, quadrature for
//! `γ` and `λ₁`, the analytic `λ₁ + λ₂`, the SNR expansions and the
//! Lyapunov-equation matrix `Γ` (the last for any number of states).
//!
//! With `x = π(1)`, `a = λ₁₂`, `b = λ₂₁`, `Δh = h₁ − h₂` and
//! `c = 2σ²/Δh²`, the stationary density of `x` is proportional to
//!
//! ```text
//! q(x) = x⁻²(1−x)⁻² exp(−c [ b/(x(1−x)) + (a−b)(log(x/(1−x)) + 1/(1−x)) ])
//! ```
//!
//! which makes the probability flux of the filter diffusion vanish and has
//! mean `μ₁`. All integrals use `x = (1 + tanh u)/2` and are evaluated from
//! the log-integrand with a shared max-shift.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{check_ergodic, stationary_distribution, ModelSpec, TOLERANCES};
use crate::quad::{adaptive_simpson, composite_gauss_legendre};

/// Relative tolerance handed to adaptive Simpson.
pub const QUAD_REL_TOL: f64 = 1e-13;

/// Margin, in natural-log units, below the peak of the log-integrand at
/// which the `u` range is cut.
const CLIP_MARGIN: f64 = 800.0;

const GL_ORDER: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
struct TwoState {
    a: f64,
    b: f64,
    h1: f64,
    h2: f64,
    sigma: f64,
}

impl TwoState {
    fn from_spec(spec: &ModelSpec) -> Result<Self> {
        if spec.dim() != 2 {
            return Err(Error::Dimension {
                expected: 2,
                got: spec.dim(),
            });
        }
        let g = &spec.generator;
        Ok(Self {
            a: g.rate(0, 1),
            b: g.rate(1, 0),
            h1: spec.h[0],
            h2: spec.h[1],
            sigma: spec.sigma,
        })
    }

    fn total(&self) -> f64 {
        self.a + self.b
    }

    fn delta(&self) -> f64 {
        self.h1 - self.h2
    }

    fn mu1(&self) -> f64 {
        self.b / self.total()
    }
}

/// Which rule evaluates [`Density2D::expect`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    AdaptiveSimpson,
    GaussLegendre,
}

/// Normalized stationary density of `π(1)` for a two-state model.
#[derive(Debug, Clone)]
pub struct Density2D {
    pub spec: ModelSpec,
    p: TwoState,
    c: f64,
    u_range: (f64, f64),
    peak: f64,
    /// `log Z` with `Z = ∫₀¹ q(x) dx`.
    pub log_normalization: f64,
    /// Bound on the relative mass outside the integration range.
    pub tail_bound: f64,
    pub quad_tolerance: f64,
}

/// `(x, 1−x, log x, log(1−x))` at `x = (1 + tanh u)/2`.
fn logistic(u: f64) -> (f64, f64, f64, f64) {
    let e = (-2.0 * u.abs()).exp();
    let big = 1.0 / (1.0 + e);
    let small = e / (1.0 + e);
    let log_big = -e.ln_1p();
    let log_small = -2.0 * u.abs() - e.ln_1p();
    if u >= 0.0 {
        (big, small, log_big, log_small)
    } else {
        (small, big, log_small, log_big)
    }
}

impl Density2D {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        let p = TwoState::from_spec(spec)?;
        check_ergodic(&spec.generator)?;
        if p.delta().abs() <= TOLERANCES.structural {
            return Err(Error::DegenerateObservation);
        }
        let c = 2.0 * p.sigma * p.sigma / (p.delta() * p.delta());
        let mut d = Self {
            spec: spec.clone(),
            p,
            c,
            u_range: (0.0, 0.0),
            peak: 0.0,
            log_normalization: 0.0,
            tail_bound: 0.0,
            quad_tolerance: 0.0,
        };
        d.locate_mass();
        let z_as = d.raw_integral(&|_, _| 1.0, Rule::AdaptiveSimpson);
        let z_gl = d.raw_integral(&|_, _| 1.0, Rule::GaussLegendre);
        d.log_normalization = d.peak + z_as.ln();
        d.tail_bound /= z_as;
        d.quad_tolerance = ((z_as - z_gl) / z_as).abs().max(QUAD_REL_TOL);
        Ok(d)
    }

    /// Log of the integrand `q(x(u)) dx/du`.
    fn log_integrand(&self, u: f64) -> f64 {
        let TwoState { a, b, .. } = self.p;
        let (_, _, lx, ly) = logistic(u);
        let (ep, em) = ((2.0 * u).exp(), (-2.0 * u).exp());
        std::f64::consts::LN_2 - lx - ly - self.c * (a * ep + b * em + 2.0 * b + (a - b) * (2.0 * u + 1.0))
    }

    fn log_integrand_slope(&self, u: f64) -> f64 {
        let TwoState { a, b, .. } = self.p;
        let (x, y, _, _) = logistic(u);
        2.0 * (x - y) - 2.0 * self.c * (a * (2.0 * u).exp() - b * (-2.0 * u).exp() + (a - b))
    }

    /// Finds the peak of the log-integrand and cuts the `u` range where it
    /// has dropped by [`CLIP_MARGIN`] and is moving away from the peak. The
    /// log-integrand is concave beyond both cuts, so the tail past a cut is
    /// at most `exp(g(cut) − peak) / |g'(cut)|` in shifted units.
    fn locate_mass(&mut self) {
        const STEP: f64 = 0.02;
        const LIMIT: f64 = 60.0;
        let mut peak = self.log_integrand(0.0);
        let mut hi = 0.0;
        let mut lo = 0.0;
        for _ in 0..2 {
            while hi < LIMIT && !(self.log_integrand(hi) < peak - CLIP_MARGIN && self.log_integrand_slope(hi) < -1.0) {
                hi += STEP;
                peak = peak.max(self.log_integrand(hi));
            }
            while lo > -LIMIT && !(self.log_integrand(lo) < peak - CLIP_MARGIN && self.log_integrand_slope(lo) > 1.0) {
                lo -= STEP;
                peak = peak.max(self.log_integrand(lo));
            }
        }
        self.peak = peak;
        self.u_range = (lo, hi);
        self.tail_bound = (self.log_integrand(hi) - peak).exp() / self.log_integrand_slope(hi).abs()
            + (self.log_integrand(lo) - peak).exp() / self.log_integrand_slope(lo).abs();
    }

    /// `∫ q(x) φ(x, 1−x) dx · e^{−peak}` over the clipped range.
    fn raw_integral(&self, phi: &impl Fn(f64, f64) -> f64, rule: Rule) -> f64 {
        let f = |u: f64| {
            let (x, y, _, _) = logistic(u);
            (self.log_integrand(u) - self.peak).exp() * phi(x, y)
        };
        let (lo, hi) = self.u_range;
        match rule {
            Rule::AdaptiveSimpson => adaptive_simpson(&f, lo, hi, self.rel_tol()),
            Rule::GaussLegendre => {
                let width = (0.5 / (self.c * self.p.total()).sqrt()).min(0.02);
                let panels = ((hi - lo) / width).ceil().max(1.0) as usize;
                composite_gauss_legendre(&f, lo, hi, panels, GL_ORDER)
            }
        }
    }

    /// Rounding in a log-integrand of size `|g|` perturbs its exponential
    /// by about `ε|g|`, so the target never goes below that.
    fn rel_tol(&self) -> f64 {
        QUAD_REL_TOL.max(16.0 * f64::EPSILON * (self.peak.abs() + 1.0))
    }

    /// `E φ(x, 1−x)` under the normalized density.
    pub fn expect(&self, phi: impl Fn(f64, f64) -> f64, rule: Rule) -> f64 {
        self.raw_integral(&phi, rule) / self.raw_integral(&|_, _| 1.0, rule)
    }

    /// Unnormalized `log q(x)`.
    pub fn log_q(&self, x: f64) -> Result<f64> {
        log_q(&self.p, self.c, x)
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        Ok((self.log_q(x)? - self.log_normalization).exp())
    }
}

fn log_q(p: &TwoState, c: f64, x: f64) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::DomainError(x));
    }
    let y = 1.0 - x;
    let (lx, ly) = (x.ln(), y.ln());
    Ok(-2.0 * lx - 2.0 * ly - c * (p.b / (x * y) + (p.a - p.b) * (lx - ly + 1.0 / y)))
}

fn checked(spec: &ModelSpec) -> Result<(TwoState, f64)> {
    let p = TwoState::from_spec(spec)?;
    if p.delta().abs() <= TOLERANCES.structural {
        return Err(Error::DegenerateObservation);
    }
    Ok((p, 2.0 * p.sigma * p.sigma / (p.delta() * p.delta())))
}

/// Unnormalized stationary density `q(x)`.
pub fn density_eval(spec: &ModelSpec, x: f64) -> Result<f64> {
    log_density_eval(spec, x).map(f64::exp)
}

/// `log q(x)`, finite wherever `q(x)` underflows.
pub fn log_density_eval(spec: &ModelSpec, x: f64) -> Result<f64> {
    let (p, c) = checked(spec)?;
    log_q(&p, c, x)
}

/// Quadrature values for one two-state model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSummary {
    pub gamma: f64,
    pub lambda1: f64,
    pub lambda_sum: f64,
    /// Largest disagreement between the two quadrature rules on `γ` or `λ₁`.
    pub quad_error: f64,
    pub tail_bound: f64,
}

fn gamma_from(p: &TwoState, mixed_moment: f64) -> f64 {
    -p.total() + p.delta().powi(2) / p.sigma.powi(2) * (-0.5 + mixed_moment)
}

fn lambda1_from(p: &TwoState, d: &Density2D, rule: Rule) -> f64 {
    d.expect(|x, y| (x * p.h1 + y * p.h2).powi(2), rule) / (2.0 * p.sigma * p.sigma)
}

pub fn quadrature_summary(spec: &ModelSpec) -> Result<QuadratureSummary> {
    let d = Density2D::new(spec)?;
    let p = d.p;
    let gamma_as = gamma_from(&p, d.expect(|x, y| x * y, Rule::AdaptiveSimpson));
    let gamma_gl = gamma_from(&p, d.expect(|x, y| x * y, Rule::GaussLegendre));
    let l1_as = lambda1_from(&p, &d, Rule::AdaptiveSimpson);
    let l1_gl = lambda1_from(&p, &d, Rule::GaussLegendre);
    Ok(QuadratureSummary {
        gamma: gamma_as,
        lambda1: l1_as,
        lambda_sum: lambda_sum_closed_form(spec)?,
        quad_error: (gamma_as - gamma_gl).abs().max((l1_as - l1_gl).abs()),
        tail_bound: d.tail_bound,
    })
}

/// Stability index `γ = −(a+b) + (Δh²/σ²)(−½ + E[x(1−x)])`.
pub fn gamma_quadrature(spec: &ModelSpec) -> Result<f64> {
    let d = Density2D::new(spec)?;
    Ok(gamma_from(&d.p, d.expect(|x, y| x * y, Rule::AdaptiveSimpson)))
}

/// `λ₁ = (2σ²)⁻¹ E[(x h₁ + (1−x) h₂)²]`.
pub fn lambda1_quadrature(spec: &ModelSpec) -> Result<f64> {
    let p = TwoState::from_spec(spec)?;
    if p.delta() == 0.0 {
        return Ok(p.h1 * p.h1 / (2.0 * p.sigma * p.sigma));
    }
    let d = Density2D::new(spec)?;
    Ok(lambda1_from(&d.p, &d, Rule::AdaptiveSimpson))
}

/// `λ₁ + λ₂ = −(a+b) + σ⁻²((h₁+h₂)μ(h) − ½h₁² − ½h₂²)`; defined for `Δh = 0`.
pub fn lambda_sum_closed_form(spec: &ModelSpec) -> Result<f64> {
    let p = TwoState::from_spec(spec)?;
    let mu1 = p.mu1();
    let mean_h = mu1 * p.h1 + (1.0 - mu1) * p.h2;
    Ok(-p.total() + ((p.h1 + p.h2) * mean_h - 0.5 * (p.h1 * p.h1 + p.h2 * p.h2)) / (p.sigma * p.sigma))
}

/// Large-`σ` expansion of `γ` through order `σ⁻⁴`:
/// `−(a+b) + σ⁻²(−½(h₁²+h₂²) + (μ₂h₁+μ₁h₂)(μ₁h₁+μ₂h₂)) − σ⁻⁴ hᵀΓh`,
/// where `hᵀΓh = Δh⁴μ₁²μ₂²/(2(a+b))`.
pub fn gamma_expansion_low_snr(spec: &ModelSpec) -> Result<f64> {
    let p = TwoState::from_spec(spec)?;
    let (mu1, mu2) = (p.mu1(), 1.0 - p.mu1());
    let s2 = p.sigma * p.sigma;
    let second = -0.5 * (p.h1 * p.h1 + p.h2 * p.h2) + (mu2 * p.h1 + mu1 * p.h2) * (mu1 * p.h1 + mu2 * p.h2);
    let fourth = -p.delta().powi(4) * (mu1 * mu2).powi(2) / (2.0 * p.total());
    Ok(-p.total() + second / s2 + fourth / (s2 * s2))
}

/// An expansion value with the `o(1)` corrections set to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Asymptotic {
    pub value: f64,
    /// False outside the regime where the expansion is meaningful.
    pub in_regime: bool,
}

/// Small-`σ` expansion `γ ≈ −½σ⁻²Δh² + log(σ⁻²)·4ab/(a+b)`. The log
/// coefficient is twice `Σμᵢ|λᵢᵢ|`, matching `γ = λ₁+λ₂ − 2λ₁` with the
/// small-`σ` expansion of `λ₁`.
pub fn gamma_expansion_high_snr(spec: &ModelSpec) -> Result<Asymptotic> {
    let (p, _) = checked(spec)?;
    let s2 = p.sigma * p.sigma;
    Ok(Asymptotic {
        value: -0.5 * p.delta().powi(2) / s2 + (1.0 / s2).ln() * high_snr_log_coefficient(spec)?,
        in_regime: p.sigma < 1.0,
    })
}

/// `4ab/(a+b)`.
pub fn high_snr_log_coefficient(spec: &ModelSpec) -> Result<f64> {
    let p = TwoState::from_spec(spec)?;
    Ok(4.0 * p.a * p.b / p.total())
}

/// Small-`σ` expansion `λ₁ ≈ ½σ⁻²μ(h²) − log(σ⁻²) Σμᵢ|λᵢᵢ|` for any
/// number of states with pairwise distinct `h`.
pub fn lambda1_refined_expansion(spec: &ModelSpec) -> Result<Asymptotic> {
    let h = &spec.h;
    for i in 0..h.len() {
        for j in i + 1..h.len() {
            if (h[i] - h[j]).abs() <= TOLERANCES.structural {
                return Err(Error::NotApplicable(format!("h_{} = h_{}", i + 1, j + 1)));
            }
        }
    }
    let mu = stationary_distribution(&spec.generator)?.mu;
    let g = &spec.generator;
    let s2 = spec.sigma * spec.sigma;
    let mean_sq: f64 = mu.iter().zip(h).map(|(m, x)| m * x * x).sum();
    let exit: f64 = mu.iter().enumerate().map(|(i, m)| m * g.exit_rate(i)).sum();
    Ok(Asymptotic {
        value: 0.5 * mean_sq / s2 - (1.0 / s2).ln() * exit,
        in_regime: spec.sigma < 1.0,
    })
}

/// Large-`σ` expansion `λ₁ ≈ ½μ(h)²σ⁻² + ½hᵀΓh σ⁻⁴`.
pub fn lambda1_expansion_low_snr(spec: &ModelSpec) -> Result<f64> {
    let mean = spec.mean_h(&stationary_distribution(&spec.generator)?.mu);
    let q = solve_gamma_lyapunov(spec)?.quadratic_form(&spec.h);
    let s2 = spec.sigma * spec.sigma;
    Ok(0.5 * mean * mean / s2 + 0.5 * q / (s2 * s2))
}

/// Symmetric `Γ` with `ΛᵀΓ + ΓΛ + QhhᵀQ = 0`, `Q = diag(μ) − μμᵀ`, and
/// `Σᵢⱼ Γᵢⱼ = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaLyapunovSolution {
    pub gamma: DMatrix<f64>,
    /// Max-norm of `ΛᵀΓ + ΓΛ + QhhᵀQ`.
    pub residual: f64,
}

impl GammaLyapunovSolution {
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        let v = DVector::from_column_slice(v);
        (v.transpose() * &self.gamma * &v)[(0, 0)]
    }
}

/// Solves the Lyapunov equation by least squares on `vec(Γ)` with the
/// zero-sum constraint appended; the operator's kernel on symmetric
/// matrices is spanned by `11ᵀ`, which the constraint removes.
pub fn solve_gamma_lyapunov(spec: &ModelSpec) -> Result<GammaLyapunovSolution> {
    let g = spec.generator.matrix();
    let d = spec.dim();
    let mu = DVector::from_vec(stationary_distribution(&spec.generator)?.mu);
    let q = DMatrix::from_diagonal(&mu) - &mu * mu.transpose();
    let qh = &q * DVector::from_column_slice(&spec.h);
    let forcing = &qh * qh.transpose();

    let n = d * d;
    let mut m = DMatrix::zeros(n + 1, n);
    let mut rhs = DVector::zeros(n + 1);
    // column-major vec: Γ_kl ↦ k + d·l
    for i in 0..d {
        for j in 0..d {
            let row = i + d * j;
            for k in 0..d {
                m[(row, k + d * j)] += g[(k, i)];
                m[(row, i + d * k)] += g[(k, j)];
            }
            rhs[row] = -forcing[(i, j)];
        }
    }
    for col in 0..n {
        m[(n, col)] = 1.0;
    }
    let sol = m
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let raw = DMatrix::from_column_slice(d, d, sol.as_slice());
    let gamma = (&raw + raw.transpose()) * 0.5;
    let residual = (g.transpose() * &gamma + &gamma * g + &forcing).amax();
    Ok(GammaLyapunovSolution { gamma, residual })
}

/// Largest zero-flux violation of the density on `x_k = (k+½)/n`, in units
/// of `λ₁₂ + λ₂₁`. The flux over `q` is
/// `−(λ₂₁ − (λ₁₂+λ₂₁)x) + (Δh²/2σ²) x²(1−x)² (log p)'` with
/// `p = x²(1−x)² q`; the derivative is a five-point difference.
pub fn fokker_planck_residual(spec: &ModelSpec, n: usize) -> Result<f64> {
    let (p, c) = checked(spec)?;
    let log_p = |x: f64| -> Result<f64> { Ok(log_q(&p, c, x)? + 2.0 * x.ln() + 2.0 * (1.0 - x).ln()) };
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let x = (k as f64 + 0.5) / n as f64;
        let eta = 1e-3 * x.min(1.0 - x);
        let deriv = (-log_p(x + 2.0 * eta)? + 8.0 * log_p(x + eta)? - 8.0 * log_p(x - eta)? + log_p(x - 2.0 * eta)?)
            / (12.0 * eta);
        let flux = -(p.b - p.total() * x) + (x * (1.0 - x)).powi(2) * deriv / c;
        worst = worst.max(flux.abs() / p.total());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GeneratorMatrix;

    fn spec(a: f64, b: f64, h: [f64; 2], sigma: f64) -> ModelSpec {
        ModelSpec::stationary(GeneratorMatrix::two_state(a, b), h.to_vec(), sigma).unwrap()
    }

    fn benchmark() -> ModelSpec {
        spec(1.0, 1.0, [1.0, -1.0], 1.0)
    }

    /// Agreed by adaptive Simpson and composite Gauss–Legendre to 1e-12.
    const GOLDEN_GAMMA: f64 = -3.176_827_834_681_021_7;

    #[test]
    fn density_hand_value_and_symmetry() {
        let s = benchmark();
        assert!((density_eval(&s, 0.5).unwrap() - 16.0 * (-2.0f64).exp()).abs() < 1e-12);
        for x in [0.01, 0.2, 0.37, 0.49] {
            let (l, r) = (density_eval(&s, x).unwrap(), density_eval(&s, 1.0 - x).unwrap());
            assert!((l - r).abs() <= 1e-12 * l.max(1e-300));
        }
        assert_eq!(density_eval(&s, 1e-9).unwrap(), 0.0);
        assert!(log_density_eval(&s, 1e-9).unwrap().is_finite());
    }

    #[test]
    fn density_errors() {
        let s = benchmark();
        assert!(matches!(density_eval(&s, 0.0), Err(Error::DomainError(_))));
        assert!(matches!(density_eval(&s, 1.2), Err(Error::DomainError(_))));
        let flat = spec(1.0, 1.0, [0.5, 0.5], 1.0);
        assert!(matches!(density_eval(&flat, 0.5), Err(Error::DegenerateObservation)));
        assert!(matches!(gamma_quadrature(&flat), Err(Error::DegenerateObservation)));
    }

    #[test]
    fn golden_gamma_from_two_rules() {
        let s = quadrature_summary(&benchmark()).unwrap();
        assert!(s.quad_error < 1e-10, "{s:?}");
        assert!((s.gamma - GOLDEN_GAMMA).abs() < 1e-10, "{}", s.gamma);
        assert!(s.tail_bound < 1e-14);
    }

    #[test]
    fn normalization_and_mean_across_grid() {
        for &sigma in &[0.1, 0.5, 1.0, 4.0, 20.0] {
            for &(a, b) in &[(1.0, 1.0), (1.0, 4.0), (4.0, 1.0), (0.5, 2.0)] {
                for &dh in &[0.5, 2.0] {
                    let s = spec(a, b, [dh, 0.0], sigma);
                    let d = Density2D::new(&s).unwrap();
                    let mu1 = b / (a + b);
                    for rule in [Rule::AdaptiveSimpson, Rule::GaussLegendre] {
                        let mean = d.expect(|x, _| x, rule);
                        assert!((mean - mu1).abs() < 1e-9, "σ={sigma} a={a} b={b} Δh={dh}: {mean} vs {mu1}");
                    }
                    let direct = composite_gauss_legendre(&|x: f64| d.pdf(x).unwrap(), 0.0, 1.0, 4000, 20);
                    assert!((direct - 1.0).abs() < 1e-6, "σ={sigma} a={a} b={b}: {direct}");
                    assert!(d.tail_bound < 1e-14);
                }
            }
        }
    }

    #[test]
    fn lyapunov_identity_holds_to_quadrature_precision() {
        for &sigma in &[0.1, 0.3, 1.0, 3.0, 20.0] {
            for &(a, b, h1, h2) in &[(1.0, 1.0, 1.0, -1.0), (0.5, 2.0, 0.3, 1.7), (3.0, 1.0, -2.0, 0.0)] {
                let s = spec(a, b, [h1, h2], sigma);
                let sum = quadrature_summary(&s).unwrap();
                assert!((sum.gamma - (sum.lambda_sum - 2.0 * sum.lambda1)).abs() < 1e-8, "{s:?}");
                assert!(sum.gamma < 0.0);
                assert!(sum.quad_error < 1e-8, "{sum:?}");
            }
        }
    }

    #[test]
    fn lambda_sum_examples() {
        assert!((lambda_sum_closed_form(&benchmark()).unwrap() + 3.0).abs() < 1e-15);
        assert!((lambda_sum_closed_form(&spec(2.0, 3.0, [0.0, 0.0], 1.0)).unwrap() + 5.0).abs() < 1e-15);
    }

    #[test]
    fn lambda1_constant_signal() {
        let s = spec(1.0, 2.0, [0.7, 0.7], 0.5);
        assert!((lambda1_quadrature(&s).unwrap() - 0.49 / 0.5).abs() < 1e-15);
    }

    #[test]
    fn scale_covariance_of_moment_ratio() {
        let base = spec(1.0, 3.0, [1.0, -0.5], 0.8);
        let scaled = spec(1.0, 3.0, [2.5, -1.25], 2.0);
        let r = |s: &ModelSpec| Density2D::new(s).unwrap().expect(|x, y| x * y, Rule::AdaptiveSimpson);
        assert!((r(&base) - r(&scaled)).abs() < 1e-12);
        assert!((gamma_quadrature(&base).unwrap() - gamma_quadrature(&scaled).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn flux_vanishes() {
        for s in [benchmark(), spec(0.5, 3.0, [2.0, 0.1], 0.3), spec(4.0, 1.0, [0.0, 1.0], 6.0)] {
            let r = fokker_planck_residual(&s, 1000).unwrap();
            assert!(r < 1e-6, "{r}");
        }
    }

    #[test]
    fn low_snr_expansion() {
        let s = spec(2.0, 5.0, [0.4, 0.4], 0.3);
        assert!((gamma_expansion_low_snr(&s).unwrap() + 7.0).abs() < 1e-12);
        let err = |sigma: f64| {
            let s = benchmark().with_sigma(sigma);
            (gamma_expansion_low_snr(&s).unwrap() - gamma_quadrature(&s).unwrap()).abs()
        };
        let (e5, e10, e20) = (err(5.0), err(10.0), err(20.0));
        assert!(e10 <= e5 / 32.0 && e20 <= e10 / 32.0, "{e5} {e10} {e20}");
    }

    #[test]
    fn low_snr_fourth_order_term_matches_gamma_matrix() {
        let s = spec(0.7, 1.9, [1.3, -0.2], 1.0);
        let q = solve_gamma_lyapunov(&s).unwrap().quadratic_form(&s.h);
        let (mu1, mu2): (f64, f64) = (1.9 / 2.6, 0.7 / 2.6);
        assert!((q - 1.5f64.powi(4) * (mu1 * mu2).powi(2) / (2.0 * 2.6)).abs() < 1e-12);
    }

    #[test]
    fn high_snr_expansion() {
        let s = benchmark().with_sigma(0.1);
        assert!((high_snr_log_coefficient(&s).unwrap() - 2.0).abs() < 1e-15);
        let e = gamma_expansion_high_snr(&s).unwrap();
        assert!(e.in_regime);
        assert!(!gamma_expansion_high_snr(&benchmark()).unwrap().in_regime);
        let rel = |sigma: f64| {
            let s = benchmark().with_sigma(sigma);
            let g = gamma_quadrature(&s).unwrap();
            ((gamma_expansion_high_snr(&s).unwrap().value - g) / g).abs()
        };
        let (r1, r2, r3) = (rel(0.2), rel(0.1), rel(0.05));
        assert!(r1 > r2 && r2 > r3, "{r1} {r2} {r3}");
        let lead = 0.05f64.powi(2) * gamma_quadrature(&benchmark().with_sigma(0.05)).unwrap();
        assert!((lead + 2.0).abs() < 0.15 * 2.0);
    }

    #[test]
    fn refined_lambda1_brackets_quadrature() {
        let s = benchmark().with_sigma(0.1);
        let two_term = lambda1_refined_expansion(&s).unwrap().value;
        assert!((two_term - (50.0 - 100f64.ln())).abs() < 1e-12);
        let l1 = lambda1_quadrature(&s).unwrap();
        assert!(two_term < l1 && l1 < 50.0, "{two_term} {l1}");
        let dup = spec(1.0, 1.0, [1.0, 1.0], 0.1);
        assert!(matches!(lambda1_refined_expansion(&dup), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn gamma_matrix_examples() {
        let zero = spec(1.0, 2.0, [0.0, 0.0], 1.0);
        assert!(solve_gamma_lyapunov(&zero).unwrap().gamma.amax() < 1e-15);
        let sol = solve_gamma_lyapunov(&benchmark()).unwrap();
        assert!(sol.residual < 1e-12);
        assert!(sol.gamma.sum().abs() < 1e-12);
        assert!((0.5 * sol.quadratic_form(&[1.0, -1.0]) - 0.125).abs() < 1e-12);
    }

    #[test]
    fn gamma_matrix_three_states() {
        let g = GeneratorMatrix::from_rows(&[
            vec![-1.5, 1.0, 0.5],
            vec![0.3, -0.8, 0.5],
            vec![2.0, 0.1, -2.1],
        ])
        .unwrap();
        let s = ModelSpec::stationary(g, vec![1.0, -0.4, 2.2], 1.0).unwrap();
        let sol = solve_gamma_lyapunov(&s).unwrap();
        assert!(sol.residual < 1e-10);
        assert!(sol.gamma.sum().abs() < 1e-10);
        assert!((&sol.gamma - sol.gamma.transpose()).amax() < 1e-14);
        for v in [[1.0, -1.0, 0.0], [0.2, 0.5, -0.7], [1.0, 1.0, -2.0]] {
            assert!(sol.quadratic_form(&v) >= -1e-12);
        }
    }

    #[test]
    fn large_sigma_lambda1() {
        let s = benchmark().with_sigma(20.0);
        let l1 = lambda1_quadrature(&s).unwrap();
        let approx = lambda1_expansion_low_snr(&s).unwrap();
        assert!((l1 - approx).abs() < 1e-2 * approx, "{l1} {approx}");
    }
}
