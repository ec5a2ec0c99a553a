//! Discrete-time Wonham filter.
//!
//! Each step applies the chain's transition kernel over `dt` (predictor),
//! multiplies by the Gaussian likelihood of the increment under every state
//! (corrector) and renormalizes. The normalizers accumulate to `log|ρ_t|`
//! of the unnormalized (Zakai) solution. All arithmetic on the conditional
//! law is on non-negative numbers, so the simplex is preserved exactly.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::model::{is_simplex, matrix_exponential, ModelSpec, TOLERANCES};
use crate::simulate::ObservationPath;

/// Precomputed step operator for a given `(spec, dt)`.
#[derive(Debug, Clone)]
pub struct FilterKernel {
    d: usize,
    dt: f64,
    /// `exp(Λ dt)`, row-major.
    transition: Vec<f64>,
    /// `h_i / σ²`
    gain: Vec<f64>,
    /// `h_i² dt / (2σ²)`
    penalty: Vec<f64>,
}

impl FilterKernel {
    pub fn new(spec: &ModelSpec, dt: f64) -> Self {
        let d = spec.dim();
        let e = matrix_exponential(&spec.generator, dt);
        let s2 = spec.sigma * spec.sigma;
        Self {
            d,
            dt,
            transition: (0..d * d).map(|k| e[(k / d, k % d)]).collect(),
            gain: spec.h.iter().map(|h| h / s2).collect(),
            penalty: spec.h.iter().map(|h| h * h * dt / (2.0 * s2)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn max_exponent(&self, dy: f64) -> f64 {
        self.gain
            .iter()
            .zip(&self.penalty)
            .map(|(g, p)| g * dy - p)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Applies the unnormalized step operator, with likelihood weights
    /// shifted by `shift`, to `x` and writes the result into `out`.
    fn apply(&self, x: &[f64], dy: f64, shift: f64, out: &mut [f64]) {
        let d = self.d;
        for (j, o) in out.iter_mut().enumerate() {
            let mut p = 0.0;
            for i in 0..d {
                p += x[i] * self.transition[i * d + j];
            }
            *o = p * (self.gain[j] * dy - self.penalty[j] - shift).exp();
        }
    }

    /// One filter step from `pi` into `out`; returns `log|w|`, the log of the
    /// normalizer of the unnormalized update.
    pub fn step(&self, pi: &[f64], dy: f64, out: &mut [f64]) -> f64 {
        let shift = self.max_exponent(dy);
        self.apply(pi, dy, shift, out);
        let s: f64 = out.iter().sum();
        for o in out.iter_mut() {
            *o /= s;
        }
        s.ln() + shift
    }
}

/// Single filter step: predictor `exp(Λᵀdt)π`, likelihood corrector,
/// normalization. Returns the new conditional law and `log|w|`.
pub fn filter_step(pi: &[f64], dy: f64, dt: f64, spec: &ModelSpec) -> (Vec<f64>, f64) {
    let kernel = FilterKernel::new(spec, dt);
    let mut out = vec![0.0; pi.len()];
    let inc = kernel.step(pi, dy, &mut out);
    (out, inc)
}

/// Grid-sampled filter path with the accumulated log-normalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTrajectory {
    pub dt: f64,
    pub d: usize,
    /// Row-major `(steps + 1) × d` conditional laws.
    pub pi: Vec<f64>,
    /// `log|ρ_{k dt}|`, starting at 0.
    pub log_norm: Vec<f64>,
    pub spec: ModelSpec,
}

impl FilterTrajectory {
    pub fn steps(&self) -> usize {
        self.log_norm.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps() as f64
    }

    pub fn pi_at(&self, k: usize) -> &[f64] {
        &self.pi[k * self.d..(k + 1) * self.d]
    }

    pub fn last(&self) -> &[f64] {
        self.pi_at(self.steps())
    }

    /// `π_k(h)` for every grid point.
    pub fn mean_h(&self) -> Vec<f64> {
        self.pi
            .chunks_exact(self.d)
            .map(|p| self.spec.mean_h(p))
            .collect()
    }

    /// CSV with columns `k,t,pi_1..pi_d,log_norm`, every `stride`-th step.
    pub fn write_csv<W: Write>(&self, mut w: W, stride: usize) -> io::Result<()> {
        write!(w, "k,t")?;
        for i in 1..=self.d {
            write!(w, ",pi_{i}")?;
        }
        writeln!(w, ",log_norm")?;
        for k in (0..=self.steps()).step_by(stride.max(1)) {
            write!(w, "{k},{:.16e}", k as f64 * self.dt)?;
            for p in self.pi_at(k) {
                write!(w, ",{p:.16e}")?;
            }
            writeln!(w, ",{:.16e}", self.log_norm[k])?;
        }
        Ok(())
    }
}

fn check_init(init: &[f64], d: usize) -> Result<()> {
    if init.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: init.len(),
        });
    }
    if !is_simplex(init, TOLERANCES.structural) {
        return Err(Error::InvalidArgument(format!("{init:?} is not a probability vector")));
    }
    Ok(())
}

pub fn run_filter(obs: &ObservationPath, spec: &ModelSpec, init: &[f64]) -> Result<FilterTrajectory> {
    let kernel = FilterKernel::new(spec, obs.dt);
    run_filter_with(&kernel, obs, spec, init)
}

/// [`run_filter`] with a precomputed kernel; `kernel.dt()` must equal `obs.dt`.
pub fn run_filter_with(
    kernel: &FilterKernel,
    obs: &ObservationPath,
    spec: &ModelSpec,
    init: &[f64],
) -> Result<FilterTrajectory> {
    let d = spec.dim();
    check_init(init, d)?;
    let n = obs.len();
    let mut pi = Vec::with_capacity((n + 1) * d);
    pi.extend_from_slice(init);
    let mut log_norm = Vec::with_capacity(n + 1);
    log_norm.push(0.0);
    let mut next = vec![0.0; d];
    let mut acc = 0.0;
    for (k, &dy) in obs.increments.iter().enumerate() {
        acc += kernel.step(&pi[k * d..(k + 1) * d], dy, &mut next);
        pi.extend_from_slice(&next);
        log_norm.push(acc);
    }
    Ok(FilterTrajectory {
        dt: obs.dt,
        d,
        pi,
        log_norm,
        spec: spec.clone(),
    })
}

/// Two filters on the same observations, started from `nu` and `nu_bar`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoFilterRun {
    pub primary: FilterTrajectory,
    pub alternate: FilterTrajectory,
    pub nu: Vec<f64>,
    pub nu_bar: Vec<f64>,
    /// `log|π_k - π̄_k|` (ℓ₁); `-inf` when the filters coincide.
    pub log_dist: Vec<f64>,
    /// `log|π_k ∧ π̄_k|` (ℓ₁ over all 2×2 minors); `-inf` when they coincide.
    pub log_angle: Vec<f64>,
}

impl TwoFilterRun {
    /// CSV with columns `k,t,pi_*,log_norm,pibar_*,log_norm_bar,log_dist`.
    /// Coincident filters are written as `-inf`.
    pub fn write_csv<W: Write>(&self, mut w: W, stride: usize) -> io::Result<()> {
        let d = self.primary.d;
        write!(w, "k,t")?;
        for i in 1..=d {
            write!(w, ",pi_{i}")?;
        }
        write!(w, ",log_norm")?;
        for i in 1..=d {
            write!(w, ",pibar_{i}")?;
        }
        writeln!(w, ",log_norm_bar,log_dist")?;
        for k in (0..=self.primary.steps()).step_by(stride.max(1)) {
            write!(w, "{k},{:.16e}", k as f64 * self.primary.dt)?;
            for p in self.primary.pi_at(k) {
                write!(w, ",{p:.16e}")?;
            }
            write!(w, ",{:.16e}", self.primary.log_norm[k])?;
            for p in self.alternate.pi_at(k) {
                write!(w, ",{p:.16e}")?;
            }
            writeln!(w, ",{:.16e},{:.16e}", self.alternate.log_norm[k], self.log_dist[k])?;
        }
        Ok(())
    }
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// `Σ_{i,j} |x_i y_j - x_j y_i|`.
pub fn wedge_norm(x: &[f64], y: &[f64]) -> f64 {
    let d = x.len();
    let mut s = 0.0;
    for i in 0..d {
        for j in (i + 1)..d {
            s += (x[i] * y[j] - x[j] * y[i]).abs();
        }
    }
    2.0 * s
}

pub fn run_two_filters(
    obs: &ObservationPath,
    spec: &ModelSpec,
    nu: &[f64],
    nu_bar: &[f64],
) -> Result<TwoFilterRun> {
    let kernel = FilterKernel::new(spec, obs.dt);
    run_two_filters_with(&kernel, obs, spec, nu, nu_bar)
}

/// Runs both filters and tracks their difference.
///
/// The difference `π̄ - π` is carried as a unit ℓ₁ direction `v` and a
/// log-magnitude `ℓ`. With `A` the unnormalized step operator, `a = |Aπ|`,
/// `b = 1ᵀAv` and `π' = Aπ/a`, the exact update is
/// `π̄' - π' = e^ℓ (Av - bπ') / (a + e^ℓ b)`. Nothing is subtracted from a
/// nearly equal quantity, so the distance keeps full relative precision
/// long after `π` and `π̄` agree to every printed digit.
pub fn run_two_filters_with(
    kernel: &FilterKernel,
    obs: &ObservationPath,
    spec: &ModelSpec,
    nu: &[f64],
    nu_bar: &[f64],
) -> Result<TwoFilterRun> {
    let d = spec.dim();
    check_init(nu, d)?;
    check_init(nu_bar, d)?;
    let primary = run_filter_with(kernel, obs, spec, nu)?;
    let alternate = run_filter_with(kernel, obs, spec, nu_bar)?;
    let n = obs.len();

    let mut log_dist = Vec::with_capacity(n + 1);
    let mut log_angle = Vec::with_capacity(n + 1);
    let mut v: Vec<f64> = nu_bar.iter().zip(nu).map(|(a, b)| a - b).collect();
    let mut ell = l1(&v).ln();
    if ell == f64::NEG_INFINITY {
        log_dist.resize(n + 1, f64::NEG_INFINITY);
        log_angle.resize(n + 1, f64::NEG_INFINITY);
    } else {
        let norm = l1(&v);
        v.iter_mut().for_each(|x| *x /= norm);
        log_dist.push(ell);
        log_angle.push(ell + wedge_norm(nu, &v).ln());
        let mut a_pi = vec![0.0; d];
        let mut a_v = vec![0.0; d];
        for k in 0..n {
            let dy = obs.increments[k];
            let pi = primary.pi_at(k);
            let shift = kernel.max_exponent(dy);
            kernel.apply(pi, dy, shift, &mut a_pi);
            kernel.apply(&v, dy, shift, &mut a_v);
            let a: f64 = a_pi.iter().sum();
            let b: f64 = a_v.iter().sum();
            let next = primary.pi_at(k + 1);
            for (x, p) in a_v.iter_mut().zip(next) {
                *x -= b * p;
            }
            let norm = l1(&a_v);
            if norm == 0.0 || ell == f64::NEG_INFINITY {
                ell = f64::NEG_INFINITY;
                log_dist.push(ell);
                log_angle.push(ell);
                continue;
            }
            let denom = a + ell.exp() * b;
            ell += norm.ln() - denom.ln();
            for (x, y) in v.iter_mut().zip(&a_v) {
                *x = y / norm;
            }
            log_dist.push(ell);
            log_angle.push(ell + wedge_norm(next, &v).ln());
        }
    }
    Ok(TwoFilterRun {
        primary,
        alternate,
        nu: nu.to_vec(),
        nu_bar: nu_bar.to_vec(),
        log_dist,
        log_angle,
    })
}

/// `log|ρ_k ∧ ρ̄_k| = log|ρ_k| + log|ρ̄_k| + log|π_k ∧ π̄_k|`.
pub fn wedge_log_norm(run: &TwoFilterRun) -> Vec<f64> {
    run.log_angle
        .iter()
        .zip(&run.primary.log_norm)
        .zip(&run.alternate.log_norm)
        .map(|((w, a), b)| w + a + b)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GeneratorMatrix;
    use crate::simulate::{sample_chain, sample_observation, RngStream};

    fn sym_spec(sigma: f64) -> ModelSpec {
        ModelSpec::new(GeneratorMatrix::two_state(1.0, 1.0), vec![1.0, -1.0], sigma, vec![0.5, 0.5]).unwrap()
    }

    fn simulate(spec: &ModelSpec, t: f64, dt: f64, seed: u64) -> ObservationPath {
        let s = RngStream::new(seed, 0);
        let path = sample_chain(spec, t, &s).unwrap();
        sample_observation(&path, spec, dt, &s).unwrap()
    }

    #[test]
    fn uninformative_observation_is_pure_prediction() {
        let g = GeneratorMatrix::from_rows(&[
            vec![-1.0, 0.6, 0.4],
            vec![0.3, -0.5, 0.2],
            vec![1.0, 1.0, -2.0],
        ])
        .unwrap();
        let spec = ModelSpec::stationary(g.clone(), vec![0.7, 0.7, 0.7], 0.5).unwrap();
        let pi = [0.2, 0.5, 0.3];
        let (dy, dt) = (0.13, 0.05);
        let (next, inc) = filter_step(&pi, dy, dt, &spec);
        let e = matrix_exponential(&g, dt);
        for j in 0..3 {
            let p: f64 = (0..3).map(|i| pi[i] * e[(i, j)]).sum();
            assert!((next[j] - p).abs() < 1e-15);
        }
        let expected = 0.7 * dy / 0.25 - 0.49 * dt / (2.0 * 0.25);
        assert!((inc - expected).abs() < 1e-14);
    }

    #[test]
    fn hand_bayes_update() {
        let spec = ModelSpec {
            generator: GeneratorMatrix::two_state(0.0, 0.0),
            h: vec![1.0, 0.0],
            sigma: 1.0,
            nu: vec![0.5, 0.5],
        };
        let (next, inc) = filter_step(&[0.5, 0.5], 0.0, 1.0, &spec);
        let w = (-0.5f64).exp();
        assert!((next[0] - w / (1.0 + w)).abs() < 1e-15);
        assert!((next[0] - 0.37754).abs() < 1e-5 && (next[1] - 0.62246).abs() < 1e-5);
        assert!((inc - (0.5 * w + 0.5).ln()).abs() < 1e-15);
    }

    #[test]
    fn small_steps_move_little() {
        let spec = sym_spec(1.0);
        let pi = [0.3, 0.7];
        let (a, _) = filter_step(&pi, 1e-4, 1e-6, &spec);
        let (b, _) = filter_step(&pi, 1e-3, 1e-5, &spec);
        let da = l1(&[a[0] - pi[0], a[1] - pi[1]]);
        let db = l1(&[b[0] - pi[0], b[1] - pi[1]]);
        assert!(da < 1e-3 && db < 1e-2 && da < db);
    }

    #[test]
    fn extreme_increments_never_produce_nan() {
        let spec = ModelSpec::new(GeneratorMatrix::two_state(1.0, 1.0), vec![50.0, -50.0], 1e-3, vec![0.5, 0.5]).unwrap();
        for &dy in &[1e3, -1e3, 0.0, 1e-300] {
            let (p, inc) = filter_step(&[0.5, 0.5], dy, 1e-3, &spec);
            assert!(p.iter().all(|x| x.is_finite() && *x >= 0.0));
            assert!(inc.is_finite());
            assert!(is_simplex(&p, 1e-12));
        }
    }

    #[test]
    fn large_noise_tracks_forward_equation() {
        let spec = sym_spec(1e3).with_nu(vec![1.0, 0.0]);
        let g = GeneratorMatrix::two_state(2.0, 0.5);
        let spec = ModelSpec::new(g.clone(), spec.h.clone(), 1e3, vec![1.0, 0.0]).unwrap();
        let obs = simulate(&spec, 2.0, 1e-3, 3);
        let traj = run_filter(&obs, &spec, &[1.0, 0.0]).unwrap();
        for &k in &[500usize, 1000, 2000] {
            let e = matrix_exponential(&g, k as f64 * 1e-3);
            assert!((traj.pi_at(k)[0] - e[(0, 0)]).abs() < 1e-2);
        }
    }

    #[test]
    fn trajectory_stays_in_simplex() {
        let g = GeneratorMatrix::from_rows(&[
            vec![-1.0, 0.6, 0.4],
            vec![0.3, -0.5, 0.2],
            vec![1.0, 1.0, -2.0],
        ])
        .unwrap();
        for &sigma in &[0.05, 1.0, 20.0] {
            let spec = ModelSpec::stationary(g.clone(), vec![-1.0, 0.5, 2.0], sigma).unwrap();
            let obs = simulate(&spec, 20.0, 1e-3, 8);
            let traj = run_filter(&obs, &spec, &[1.0, 0.0, 0.0]).unwrap();
            assert_eq!(traj.log_norm[0], 0.0);
            assert!(traj.log_norm.iter().all(|x| x.is_finite()));
            for k in 0..=traj.steps() {
                assert!(is_simplex(traj.pi_at(k), 1e-12), "step {k}: {:?}", traj.pi_at(k));
            }
        }
    }

    #[test]
    fn coincident_initials_give_neg_inf_distance() {
        let spec = sym_spec(1.0);
        let obs = simulate(&spec, 1.0, 1e-2, 1);
        let run = run_two_filters(&obs, &spec, &[0.3, 0.7], &[0.3, 0.7]).unwrap();
        assert!(run.log_dist.iter().all(|&x| x == f64::NEG_INFINITY));
        assert!(wedge_log_norm(&run).iter().all(|&x| x == f64::NEG_INFINITY));
    }

    #[test]
    fn wedge_of_basis_vectors() {
        assert_eq!(wedge_norm(&[1.0, 0.0], &[0.0, 1.0]), 2.0);
        assert_eq!(wedge_norm(&[0.4, 0.6], &[0.4, 0.6]), 0.0);
        let spec = sym_spec(1.0);
        let obs = simulate(&spec, 0.01, 1e-2, 1);
        let run = run_two_filters(&obs, &spec, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((run.log_angle[0] - 2f64.ln()).abs() < 1e-15);
        assert!((run.log_dist[0] - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn tracked_distance_matches_direct_difference_while_resolvable() {
        let g = GeneratorMatrix::from_rows(&[
            vec![-1.0, 0.6, 0.4],
            vec![0.3, -0.5, 0.2],
            vec![1.0, 1.0, -2.0],
        ])
        .unwrap();
        let spec = ModelSpec::stationary(g, vec![-1.0, 0.5, 2.0], 0.8).unwrap();
        let obs = simulate(&spec, 5.0, 1e-3, 21);
        let run = run_two_filters(&obs, &spec, &[1.0, 0.0, 0.0], &[0.0, 0.2, 0.8]).unwrap();
        for k in 0..=run.primary.steps() {
            let direct: f64 = run
                .primary
                .pi_at(k)
                .iter()
                .zip(run.alternate.pi_at(k))
                .map(|(a, b)| (a - b).abs())
                .sum();
            if direct > 1e-6 {
                assert!((direct.ln() - run.log_dist[k]).abs() < 1e-8, "step {k}");
            }
        }
    }

    #[test]
    fn distance_keeps_resolving_below_double_precision() {
        let spec = sym_spec(0.2).with_nu(vec![1.0, 0.0]);
        let obs = simulate(&spec, 10.0, 1e-3, 5);
        let run = run_two_filters(&obs, &spec, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        let last = *run.log_dist.last().unwrap();
        assert!(last.is_finite() && last < -300.0, "{last}");
    }

    #[test]
    fn sandwich_holds_pathwise() {
        let g = GeneratorMatrix::from_rows(&[
            vec![-1.0, 0.6, 0.4],
            vec![0.3, -0.5, 0.2],
            vec![1.0, 1.0, -2.0],
        ])
        .unwrap();
        let spec = ModelSpec::stationary(g, vec![-1.0, 0.5, 2.0], 0.5).unwrap();
        let obs = simulate(&spec, 30.0, 1e-3, 2);
        let run = run_two_filters(&obs, &spec, &[0.1, 0.1, 0.8], &[0.6, 0.3, 0.1]).unwrap();
        let wedge = wedge_log_norm(&run);
        for k in 0..=run.primary.steps() {
            let ratio = wedge[k] - run.primary.log_norm[k] - run.alternate.log_norm[k];
            assert!(run.log_dist[k] >= ratio - 2f64.ln() - 1e-12);
            assert!(run.log_dist[k] <= ratio + 1e-12);
        }
    }

    #[test]
    fn semiflow_restart_is_bit_exact() {
        let spec = sym_spec(0.7);
        let obs = simulate(&spec, 10.0, 1e-3, 4);
        let full = run_filter(&obs, &spec, &[0.9, 0.1]).unwrap();
        let mid = obs.len() / 2;
        let first = run_filter(&obs.slice(0, mid), &spec, &[0.9, 0.1]).unwrap();
        let second = run_filter(&obs.slice(mid, obs.len()), &spec, first.last()).unwrap();
        assert_eq!(&full.pi[..(mid + 1) * 2], &first.pi[..]);
        assert_eq!(&full.pi[mid * 2..], &second.pi[..]);
        let offset = first.log_norm[mid];
        for k in 0..=second.steps() {
            assert!((full.log_norm[mid + k] - (offset + second.log_norm[k])).abs() < 1e-9);
        }
    }

    #[test]
    fn trajectory_csv_layout() {
        let spec = sym_spec(1.0);
        let obs = simulate(&spec, 0.02, 1e-2, 1);
        let run = run_two_filters(&obs, &spec, &[0.5, 0.5], &[0.5, 0.5]).unwrap();
        let mut buf = Vec::new();
        run.write_csv(&mut buf, 1).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,t,pi_1,pi_2,log_norm,pibar_1,pibar_2,log_norm_bar,log_dist");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].ends_with(",-inf"));
    }
}
