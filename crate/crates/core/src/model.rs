//! Model definition and generator-matrix algebra.
//!
//! A [`ModelSpec`] bundles the transition-intensity matrix of the hidden
//! chain, the observation levels `h`, the noise intensity `sigma` and the
//! initial law `nu`. Everything here is a pure function of its inputs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Numerical thresholds shared by the structural and algebraic checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Row sums of a generator, simplex sums.
    pub structural: f64,
    /// Residuals of linear-algebra identities (balance equations, Lyapunov solves).
    pub algebraic: f64,
    /// Minimum entry of `exp(Λ)` for the chain to count as ergodic.
    pub ergodic_entry: f64,
    /// Relative threshold under which an eigenvalue is treated as zero.
    pub zero_eigenvalue: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    structural: 1e-12,
    algebraic: 1e-10,
    ergodic_entry: 1e-12,
    zero_eigenvalue: 1e-10,
};

/// Transition-intensity matrix of a finite continuous-time Markov chain.
///
/// Construction only checks the shape; use [`validate`] or
/// [`GeneratorMatrix::structural_violations`] for the generator invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    rates: DMatrix<f64>,
}

impl GeneratorMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if d < 2 {
            return Err(Error::InvalidModel(format!("need at least 2 states, got {d}")));
        }
        for row in rows {
            if row.len() != d {
                return Err(Error::Dimension { expected: d, got: row.len() });
            }
        }
        Ok(Self {
            rates: DMatrix::from_fn(d, d, |i, j| rows[i][j]),
        })
    }

    /// Builds a generator from its off-diagonal rates; the diagonal is derived
    /// so that every row sums to zero.
    pub fn from_off_diagonal(d: usize, rate: impl Fn(usize, usize) -> f64) -> Self {
        let mut rates = DMatrix::zeros(d, d);
        for i in 0..d {
            let mut exit = 0.0;
            for j in 0..d {
                if i != j {
                    let r = rate(i, j);
                    rates[(i, j)] = r;
                    exit += r;
                }
            }
            rates[(i, i)] = -exit;
        }
        Self { rates }
    }

    /// Two-state generator with jump rates `λ12` and `λ21`.
    pub fn two_state(rate_12: f64, rate_21: f64) -> Self {
        Self::from_off_diagonal(2, |i, _| if i == 0 { rate_12 } else { rate_21 })
    }

    pub fn dim(&self) -> usize {
        self.rates.nrows()
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.rates[(i, j)]
    }

    /// Total jump intensity out of state `i`, i.e. `-λ_ii`.
    pub fn exit_rate(&self, i: usize) -> f64 {
        -self.rates[(i, i)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.rates
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            rates: &self.rates * c,
        }
    }

    /// Relabels states: new state `k` is old state `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let d = self.dim();
        Self {
            rates: DMatrix::from_fn(d, d, |i, j| self.rates[(perm[i], perm[j])]),
        }
    }

    pub fn structural_violations(&self) -> Vec<String> {
        let d = self.dim();
        let mut out = Vec::new();
        for i in 0..d {
            let mut sum = 0.0;
            for j in 0..d {
                let r = self.rates[(i, j)];
                if !r.is_finite() {
                    out.push(format!("rate ({},{}) is not finite", i + 1, j + 1));
                }
                if i != j && r < 0.0 {
                    out.push(format!("negative off-diagonal rate ({},{}) = {r}", i + 1, j + 1));
                }
                sum += r;
            }
            if sum.abs() > TOLERANCES.structural {
                out.push(format!("row {} sums to {sum:e}, not 0", i + 1));
            }
        }
        out
    }
}

/// A filtering problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub generator: GeneratorMatrix,
    pub h: Vec<f64>,
    pub sigma: f64,
    pub nu: Vec<f64>,
}

impl ModelSpec {
    /// Builds a spec and rejects it if [`validate`] reports any error.
    pub fn new(generator: GeneratorMatrix, h: Vec<f64>, sigma: f64, nu: Vec<f64>) -> Result<Self> {
        let spec = Self {
            generator,
            h,
            sigma,
            nu,
        };
        let report = validate(&spec);
        if let Some(e) = report.into_error() {
            return Err(e);
        }
        Ok(spec)
    }

    /// Same as [`ModelSpec::new`] with `nu` set to the stationary law.
    pub fn stationary(generator: GeneratorMatrix, h: Vec<f64>, sigma: f64) -> Result<Self> {
        let mu = stationary_distribution(&generator)?.mu;
        Self::new(generator, h, sigma, mu)
    }

    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    pub fn with_sigma(&self, sigma: f64) -> Self {
        Self {
            sigma,
            ..self.clone()
        }
    }

    pub fn with_nu(&self, nu: Vec<f64>) -> Self {
        Self { nu, ..self.clone() }
    }

    /// `u(h) = Σ u_i h_i`.
    pub fn mean_h(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.h).map(|(a, b)| a * b).sum()
    }
}

/// Outcome of [`validate`]: hard errors and advisory warnings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub errors: Vec<String>,
    pub non_ergodic: bool,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn into_error(self) -> Option<Error> {
        if self.errors.is_empty() {
            None
        } else if self.non_ergodic {
            Some(Error::NonErgodic(self.errors.join("; ")))
        } else {
            Some(Error::InvalidModel(self.errors.join("; ")))
        }
    }
}

pub fn is_simplex(v: &[f64], tol: f64) -> bool {
    v.iter().all(|&x| x >= 0.0 && x.is_finite()) && (v.iter().sum::<f64>() - 1.0).abs() <= tol
}

/// Checks every invariant of a [`ModelSpec`] and collects the violations.
pub fn validate(spec: &ModelSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    let d = spec.dim();
    report.errors.extend(spec.generator.structural_violations());
    if spec.h.len() != d {
        report.errors.push(format!("h has {} entries, expected {d}", spec.h.len()));
    } else if spec.h.iter().any(|x| !x.is_finite()) {
        report.errors.push("h has non-finite entries".into());
    }
    if !(spec.sigma > 0.0 && spec.sigma.is_finite()) {
        report.errors.push(format!("sigma must be positive, got {}", spec.sigma));
    }
    if spec.nu.len() != d {
        report.errors.push(format!("nu has {} entries, expected {d}", spec.nu.len()));
    } else if !is_simplex(&spec.nu, TOLERANCES.structural) {
        report.errors.push("nu is not a probability vector".into());
    }
    if report.errors.is_empty() {
        if let Err(e) = check_ergodic(&spec.generator) {
            report.non_ergodic = true;
            report.errors.push(e.to_string());
        }
    }
    if d == 2 && spec.h.len() == 2 && spec.h[0] == spec.h[1] {
        report
            .warnings
            .push("Δh=0: 2-state closed form undefined".into());
    }
    report
}

/// Ergodicity proxy: the zero eigenvalue is simple and `exp(Λ)` is entrywise positive.
pub fn check_ergodic(g: &GeneratorMatrix) -> Result<()> {
    spectral_gap(g)?;
    let e = matrix_exponential(g, 1.0);
    let min = e.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= TOLERANCES.ergodic_entry {
        return Err(Error::NonErgodic(format!(
            "exp(Λ) has an entry {min:e} ≤ {:e}",
            TOLERANCES.ergodic_entry
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pub mu: Vec<f64>,
}

impl StationaryDistribution {
    /// `μ(f) = Σ μ_i f_i`.
    pub fn mean(&self, f: &[f64]) -> f64 {
        self.mu.iter().zip(f).map(|(a, b)| a * b).sum()
    }
}

/// Solves `μᵀΛ = 0`, `Σμ = 1` directly: the last balance equation is
/// replaced by the normalization row.
pub fn stationary_distribution(g: &GeneratorMatrix) -> Result<StationaryDistribution> {
    let d = g.dim();
    let mut a = g.matrix().transpose();
    for j in 0..d {
        a[(d - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(d);
    b[d - 1] = 1.0;
    let mu = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::NonErgodic("balance equations are singular".into()))?;
    if mu.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
        return Err(Error::NonErgodic(format!(
            "stationary law has non-positive entries {:?}",
            mu.as_slice()
        )));
    }
    let residual = (g.matrix().transpose() * &mu).amax();
    if residual > TOLERANCES.algebraic * g.matrix().amax().max(1.0) {
        return Err(Error::NonErgodic(format!("balance residual {residual:e}")));
    }
    Ok(StationaryDistribution {
        mu: mu.iter().cloned().collect(),
    })
}

/// Largest non-zero real part among the eigenvalues of `Λ`.
pub fn spectral_gap(g: &GeneratorMatrix) -> Result<f64> {
    let m = g.matrix();
    let scale = m.amax().max(1.0);
    let eig = m.clone().complex_eigenvalues();
    let zero_tol = TOLERANCES.zero_eigenvalue * scale;
    let zeros = eig.iter().filter(|z| z.norm() <= zero_tol).count();
    if zeros != 1 {
        return Err(Error::NonErgodic(format!(
            "zero eigenvalue has multiplicity {zeros}"
        )));
    }
    let gap = eig
        .iter()
        .filter(|z| z.norm() > zero_tol)
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(gap < 0.0) {
        return Err(Error::NonErgodic(format!("spectral gap {gap} is not negative")));
    }
    Ok(gap)
}

/// `exp(Λt)` by scaling and squaring around a uniformized Taylor series.
///
/// With `q = max_i |λ_ii|` and `K = I + Λ/q` (entrywise non-negative),
/// `exp(Λτ) = e^{-qτ} Σ_k (qτ)^k/k! K^k` has only non-negative terms, so
/// the result is entrywise non-negative and stochastic up to rounding.
pub fn matrix_exponential(g: &GeneratorMatrix, t: f64) -> DMatrix<f64> {
    assert!(t >= 0.0, "matrix_exponential needs t >= 0");
    let d = g.dim();
    let q = (0..d).map(|i| g.exit_rate(i).abs()).fold(0.0, f64::max);
    if q == 0.0 || t == 0.0 {
        return DMatrix::identity(d, d);
    }
    let x = q * t;
    let mut squarings = 0u32;
    let mut tau = x;
    while tau > 0.5 {
        tau *= 0.5;
        squarings += 1;
    }
    let k = DMatrix::identity(d, d) + g.matrix() / q;
    let mut power = DMatrix::identity(d, d);
    let mut coef = (-tau).exp();
    let mut out = &power * coef;
    for n in 1..40 {
        power = &power * &k;
        coef *= tau / n as f64;
        out += &power * coef;
        if coef < 1e-20 {
            break;
        }
    }
    for _ in 0..squarings {
        out = &out * &out;
    }
    out
}

/// `r = 1 - Σ_i min_{k≠l} G_ki G_li` for the one-step transition matrix `G = exp(Λ)`.
pub fn coupling_rate(g: &GeneratorMatrix) -> Result<f64> {
    let e = matrix_exponential(g, 1.0);
    let d = g.dim();
    let min = e.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= TOLERANCES.ergodic_entry {
        return Err(Error::NonErgodic(format!("exp(Λ) has an entry {min:e}")));
    }
    let mut overlap = 0.0;
    for i in 0..d {
        let mut m = f64::INFINITY;
        for k in 0..d {
            for l in 0..d {
                if k != l {
                    m = m.min(e[(k, i)] * e[(l, i)]);
                }
            }
        }
        overlap += m;
    }
    Ok(1.0 - overlap)
}
