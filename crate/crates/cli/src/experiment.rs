//! Experiment runners. Each produces an in-memory [`Artifacts`] set that
//! is written to the output directory in one go.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use rayon::prelude::*;
use rayon::ThreadPool;

use wonham_core::bounds::{check_bound_consistency, compute_bounds, BoundsReport, ConsistencyVerdict, Verdict};
use wonham_core::filter::{run_filter, run_two_filters, TwoFilterRun};
use wonham_core::lyapunov::{
    ergodic_average_identity, gamma_distance_slope, lambda1_fk_pathwise, lambda1_fk_stationary, lambda1_log_norm,
    lambda_sum_wedge, pool, LyapunovEstimate, Method,
};
use wonham_core::model::{coupling_rate, ModelSpec};
use wonham_core::simulate::{coupling_tail, sample_chain, sample_observation, ChainPath, CouplingStart, RngStream};
use wonham_core::twostate::{
    gamma_expansion_high_snr, gamma_expansion_low_snr, lambda1_refined_expansion, quadrature_summary,
};
use wonham_core::Error as CoreError;

use crate::config::{num, ConfigError, Experiment, ExperimentConfig};

/// Largest integer time in the coupling survival table.
pub const COUPLING_N_MAX: usize = 12;
/// Maximum number of rows in the trajectory dump of `simulate`.
pub const DUMP_ROWS: usize = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Core(#[from] CoreError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    /// 2 for a non-ergodic chain, 1 for anything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(ConfigError::NonErgodic(_)) | CliError::Core(CoreError::NonErgodic(_)) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// One row of `estimates.csv`. Optional fields are written empty.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub sigma: f64,
    pub method: String,
    pub value: f64,
    pub std_error: Option<f64>,
    pub spread: Option<f64>,
    pub horizon: Option<f64>,
    pub burn_in: Option<f64>,
    pub dt: Option<f64>,
    /// Master seed of the replications behind a Monte Carlo row.
    pub seed: Option<u64>,
    pub replications: Option<usize>,
}

impl EstimateRow {
    const HEADER: &'static str = "sigma,method,value,std_error,spread,horizon,burn_in,dt,seed,replications";

    fn reference(sigma: f64, method: &str, value: f64, error: Option<f64>) -> Self {
        Self {
            sigma,
            method: method.into(),
            value,
            std_error: error,
            spread: None,
            horizon: None,
            burn_in: None,
            dt: None,
            seed: None,
            replications: None,
        }
    }

    fn from_pooled(sigma: f64, dt: f64, seed: u64, est: &LyapunovEstimate, spread: f64) -> Self {
        Self {
            sigma,
            method: est.method.tag().into(),
            value: est.value,
            std_error: Some(est.std_error),
            spread: Some(spread),
            horizon: Some(est.horizon),
            burn_in: Some(est.burn_in),
            dt: Some(dt),
            seed: Some(seed),
            replications: Some(est.replications),
        }
    }

    fn csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            num(self.sigma),
            self.method,
            num(self.value),
            opt(self.std_error),
            opt(self.spread),
            opt(self.horizon),
            opt(self.burn_in),
            opt(self.dt),
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
            self.replications.map(|r| r.to_string()).unwrap_or_default()
        )
    }
}

/// One row of `verdicts.csv`; infinite limits are written empty.
#[derive(Debug, Clone, PartialEq)]
pub struct VerdictRow {
    pub sigma: f64,
    pub check: String,
    pub observed: f64,
    pub lower: f64,
    pub upper: f64,
    pub verdict: Verdict,
}

impl VerdictRow {
    const HEADER: &'static str = "sigma,check,observed,lower,upper,verdict";

    fn csv(&self) -> String {
        let lim = |x: f64| if x.is_finite() { num(x) } else { String::new() };
        format!(
            "{},{},{},{},{},{}",
            num(self.sigma),
            self.check,
            num(self.observed),
            lim(self.lower),
            lim(self.upper),
            self.verdict
        )
    }

    fn within(sigma: f64, check: &str, observed: f64, lower: f64, upper: f64) -> Self {
        let verdict = if observed >= lower && observed <= upper {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        Self {
            sigma,
            check: check.into(),
            observed,
            lower,
            upper,
            verdict,
        }
    }
}

/// Every file an experiment writes.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Artifacts {
    pub estimates: Vec<EstimateRow>,
    pub bounds: Vec<(f64, BoundsReport)>,
    pub verdicts: Vec<VerdictRow>,
    pub meta: String,
    /// Experiment-specific files as `(name, contents)`.
    pub extra: Vec<(String, String)>,
}

impl Artifacts {
    pub fn estimates_csv(&self) -> String {
        lines(EstimateRow::HEADER, self.estimates.iter().map(EstimateRow::csv))
    }

    pub fn bounds_csv(&self) -> String {
        let header = format!("sigma,{}", BoundsReport::CSV_HEADER);
        lines(&header, self.bounds.iter().map(|(s, b)| format!("{},{}", num(*s), b.csv_row())))
    }

    pub fn verdicts_csv(&self) -> String {
        lines(VerdictRow::HEADER, self.verdicts.iter().map(VerdictRow::csv))
    }

    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("estimates.csv"), self.estimates_csv())?;
        fs::write(dir.join("bounds.csv"), self.bounds_csv())?;
        fs::write(dir.join("verdicts.csv"), self.verdicts_csv())?;
        fs::write(dir.join("meta.txt"), &self.meta)?;
        for (name, body) in &self.extra {
            fs::write(dir.join(name), body)?;
        }
        Ok(())
    }

    fn add_verdicts(&mut self, sigma: f64, v: &ConsistencyVerdict) {
        for c in &v.checks {
            self.verdicts.push(VerdictRow {
                sigma,
                check: c.bound.into(),
                observed: c.observed,
                lower: c.lower,
                upper: c.upper,
                verdict: c.verdict,
            });
        }
    }
}

fn lines(header: &str, rows: impl Iterator<Item = String>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

/// Version line written at the top of `meta.txt`.
pub fn version_stamp() -> String {
    format!("{} {} (git {})", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"), env!("WONHAM_GIT_STAMP"))
}

fn meta(cfg: &ExperimentConfig, experiment: Experiment) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {}", version_stamp());
    let _ = writeln!(s, "# experiment: {experiment}");
    for key in &cfg.defaulted {
        let note = match *key {
            "nu" => "stationary law of the chain",
            "nu_bar" => "point mass on the least likely state under nu",
            "burn_in" => "10 / |spectral gap|",
            _ => "built-in default",
        };
        let _ = writeln!(s, "# default {key}: {note}");
    }
    s.push_str(&cfg.to_config_text());
    s
}

/// Runs `experiment` and returns its artifacts without touching the disk.
pub fn run_experiment(cfg: &ExperimentConfig, experiment: Experiment, pool: &ThreadPool) -> CliResult<Artifacts> {
    if let Some(declared) = cfg.experiment {
        if declared != experiment {
            return Err(ConfigError::Global(format!(
                "config declares experiment `{declared}` but `{experiment}` was requested"
            ))
            .into());
        }
    }
    let mut art = Artifacts {
        meta: meta(cfg, experiment),
        ..Artifacts::default()
    };
    let spec = &cfg.spec;
    match experiment {
        Experiment::Simulate => simulate(cfg, &mut art)?,
        Experiment::GammaMc => {
            quadrature_rows(spec, &mut art, false)?;
            gamma_mc(cfg, spec, pool, &mut art)?;
        }
        Experiment::GammaQuad => {
            if spec.dim() != 2 {
                return Err(ConfigError::Global("gamma-quad requires d = 2".into()).into());
            }
            quadrature_rows(spec, &mut art, true)?;
            art.bounds.push((spec.sigma, compute_bounds(spec)?));
        }
        Experiment::Lyapunov => {
            quadrature_rows(spec, &mut art, false)?;
            lyapunov(cfg, pool, &mut art)?;
        }
        Experiment::Bounds => art.bounds.push((spec.sigma, compute_bounds(spec)?)),
        Experiment::Couple => couple(cfg, &mut art)?,
        Experiment::ErgodicAvg => ergodic(cfg, pool, &mut art)?,
        Experiment::SnrSweep => {
            if cfg.sigma_sweep.is_empty() {
                return Err(ConfigError::Global("snr-sweep requires `sigma_sweep`".into()).into());
            }
            for &sigma in &cfg.sigma_sweep {
                let s = spec.with_sigma(sigma);
                quadrature_rows(&s, &mut art, false)?;
                gamma_mc(cfg, &s, pool, &mut art)?;
            }
        }
    }
    Ok(art)
}

const QUADRATURE_HEADER: &str =
    "sigma,gamma,lambda1,lambda_sum,quad_error,tail_bound,gamma_low_snr,gamma_high_snr,high_snr_in_regime,lambda1_refined";

/// Appends the two-state closed forms to `quadrature.csv` when they apply.
/// With `required`, a spec outside their domain is an error.
fn quadrature_rows(spec: &ModelSpec, art: &mut Artifacts, required: bool) -> CliResult<()> {
    let applicable = spec.dim() == 2 && spec.h[0] != spec.h[1];
    if !applicable {
        if required {
            return Err(CoreError::DegenerateObservation.into());
        }
        return Ok(());
    }
    let q = quadrature_summary(spec)?;
    let high = gamma_expansion_high_snr(spec)?;
    let refined = lambda1_refined_expansion(spec)?;
    let row = [
        num(spec.sigma),
        num(q.gamma),
        num(q.lambda1),
        num(q.lambda_sum),
        num(q.quad_error),
        num(q.tail_bound),
        num(gamma_expansion_low_snr(spec)?),
        num(high.value),
        high.in_regime.to_string(),
        num(refined.value),
    ]
    .join(",");
    match art.extra.iter_mut().find(|(n, _)| n == "quadrature.csv") {
        Some((_, body)) => {
            body.push_str(&row);
            body.push('\n');
        }
        None => art.extra.push(("quadrature.csv".into(), format!("{QUADRATURE_HEADER}\n{row}\n"))),
    }
    art.estimates.push(EstimateRow::reference(spec.sigma, "gamma_quadrature", q.gamma, Some(q.quad_error)));
    art.estimates.push(EstimateRow::reference(spec.sigma, "lambda1_quadrature", q.lambda1, Some(q.quad_error)));
    art.estimates.push(EstimateRow::reference(spec.sigma, "lambda_sum_closed_form", q.lambda_sum, None));
    Ok(())
}

fn paths(cfg: &ExperimentConfig, spec: &ModelSpec, stream: &RngStream) -> CliResult<(ChainPath, TwoFilterRun)> {
    let chain = sample_chain(spec, cfg.horizon, stream)?;
    let obs = sample_observation(&chain, spec, cfg.dt, stream)?;
    let run = run_two_filters(&obs, spec, &spec.nu, &cfg.nu_bar)?;
    Ok((chain, run))
}

fn replicate<T: Send>(
    cfg: &ExperimentConfig,
    pool: &ThreadPool,
    f: impl Fn(&RngStream) -> CliResult<T> + Sync,
) -> CliResult<Vec<T>> {
    pool.install(|| {
        (0..cfg.replications as u64)
            .into_par_iter()
            .map(|r| f(&RngStream::new(cfg.seed, r)))
            .collect()
    })
}

fn push_pooled(
    art: &mut Artifacts,
    cfg: &ExperimentConfig,
    sigma: f64,
    ests: &[LyapunovEstimate],
) -> CliResult<LyapunovEstimate> {
    let p = pool(ests)?;
    art.estimates.push(EstimateRow::from_pooled(sigma, cfg.dt, cfg.seed, &p.estimate, p.spread));
    Ok(p.estimate)
}

fn gamma_mc(cfg: &ExperimentConfig, spec: &ModelSpec, pool: &ThreadPool, art: &mut Artifacts) -> CliResult<()> {
    let per_rep = replicate(cfg, pool, |stream| {
        let (_, run) = paths(cfg, spec, stream)?;
        Ok((gamma_distance_slope(&run, cfg.burn_in)?, lambda_sum_wedge(&run, cfg.burn_in)?))
    })?;
    let (gammas, wedges): (Vec<_>, Vec<_>) = per_rep.into_iter().unzip();
    let gamma = push_pooled(art, cfg, spec.sigma, &gammas)?;
    push_pooled(art, cfg, spec.sigma, &wedges)?;
    let bounds = compute_bounds(spec)?;
    art.add_verdicts(spec.sigma, &check_bound_consistency(&gamma, spec.sigma, &bounds));
    art.bounds.push((spec.sigma, bounds));
    Ok(())
}

fn lyapunov(cfg: &ExperimentConfig, pool: &ThreadPool, art: &mut Artifacts) -> CliResult<()> {
    let spec = &cfg.spec;
    let per_rep = replicate(cfg, pool, |stream| {
        let (chain, run) = paths(cfg, spec, stream)?;
        let b = cfg.burn_in;
        Ok([
            lambda1_fk_pathwise(&run.primary, &chain, b)?,
            lambda1_fk_stationary(&run.primary, b)?,
            lambda1_log_norm(&run.primary, b)?,
            lambda_sum_wedge(&run, b)?,
            gamma_distance_slope(&run, b)?,
        ])
    })?;
    let mut gamma = None;
    for m in 0..5 {
        let column: Vec<LyapunovEstimate> = per_rep.iter().map(|r| r[m]).collect();
        let est = push_pooled(art, cfg, spec.sigma, &column)?;
        if est.method == Method::DistanceSlope {
            gamma = Some(est);
        }
    }
    let bounds = compute_bounds(spec)?;
    if let Some(g) = gamma {
        art.add_verdicts(spec.sigma, &check_bound_consistency(&g, spec.sigma, &bounds));
    }
    art.bounds.push((spec.sigma, bounds));
    Ok(())
}

fn simulate(cfg: &ExperimentConfig, art: &mut Artifacts) -> CliResult<()> {
    let spec = &cfg.spec;
    let stream = RngStream::new(cfg.seed, 0);
    let chain = sample_chain(spec, cfg.horizon, &stream)?;
    let obs = sample_observation(&chain, spec, cfg.dt, &stream)?;
    let run = run_two_filters(&obs, spec, &spec.nu, &cfg.nu_bar)?;

    let mut buf = Vec::new();
    chain.write_csv(&mut buf)?;
    art.extra.push(("chain.csv".into(), String::from_utf8(buf).expect("ascii")));
    let mut buf = Vec::new();
    obs.write_csv(&mut buf)?;
    art.extra.push(("observations.csv".into(), String::from_utf8(buf).expect("ascii")));
    let stride = obs.len().div_ceil(DUMP_ROWS).max(1);
    let mut buf = Vec::new();
    run.write_csv(&mut buf, stride)?;
    art.extra.push(("filters.csv".into(), String::from_utf8(buf).expect("ascii")));

    let b = cfg.burn_in;
    let mut ests = vec![
        lambda1_fk_pathwise(&run.primary, &chain, b)?,
        lambda1_fk_stationary(&run.primary, b)?,
        lambda1_log_norm(&run.primary, b)?,
    ];
    ests.push(lambda_sum_wedge(&run, b)?);
    let gamma = gamma_distance_slope(&run, b)?;
    ests.push(gamma);
    for e in &ests {
        art.estimates.push(EstimateRow::from_pooled(spec.sigma, cfg.dt, cfg.seed, e, 0.0));
    }
    let bounds = compute_bounds(spec)?;
    art.add_verdicts(spec.sigma, &check_bound_consistency(&gamma, spec.sigma, &bounds));
    art.bounds.push((spec.sigma, bounds));
    Ok(())
}

fn couple(cfg: &ExperimentConfig, art: &mut Artifacts) -> CliResult<()> {
    let spec = &cfg.spec;
    let tail = coupling_tail(spec, &cfg.nu_bar, COUPLING_N_MAX, cfg.replications, cfg.seed, CouplingStart::Independent)?;
    let mut body = String::from("n,survivors,survival\n");
    for n in 0..=COUPLING_N_MAX {
        let _ = writeln!(body, "{n},{},{}", tail.survivors[n], num(tail.survival(n)));
    }
    art.extra.push(("coupling.csv".into(), body));
    let log_r = coupling_rate(&spec.generator)?.ln();
    art.estimates.push(EstimateRow::reference(spec.sigma, "log_coupling_rate", log_r, None));
    if let Some(slope) = tail.log_slope() {
        art.estimates.push(EstimateRow {
            seed: Some(cfg.seed),
            replications: Some(cfg.replications),
            ..EstimateRow::reference(spec.sigma, "coupling_log_slope", slope.slope, Some(slope.std_error))
        });
        art.verdicts.push(VerdictRow::within(
            spec.sigma,
            "coupling_rate",
            slope.slope,
            f64::NEG_INFINITY,
            log_r + 3.0 * slope.std_error,
        ));
    }
    Ok(())
}

fn ergodic(cfg: &ExperimentConfig, pool: &ThreadPool, art: &mut Artifacts) -> CliResult<()> {
    let spec = &cfg.spec;
    let h = &spec.h;
    let per_rep = replicate(cfg, pool, |stream| {
        let chain = sample_chain(spec, cfg.horizon, stream)?;
        let obs = sample_observation(&chain, spec, cfg.dt, stream)?;
        let traj = run_filter(&obs, spec, &spec.nu)?;
        let g1 = ergodic_average_identity(&traj, &chain, cfg.burn_in, |x, pi| h[x] * spec.mean_h(pi))?;
        let g2 = ergodic_average_identity(&traj, &chain, cfg.burn_in, |_, pi| spec.mean_h(pi).powi(2))?;
        Ok([g1, g2])
    })?;
    let r = per_rep.len() as f64;
    for (idx, name) in ["signal_times_estimate", "estimate_squared"].iter().enumerate() {
        let diffs: Vec<f64> = per_rep.iter().map(|c| c[idx].pathwise - c[idx].filtered).collect();
        let pathwise = per_rep.iter().map(|c| c[idx].pathwise).sum::<f64>() / r;
        let filtered = per_rep.iter().map(|c| c[idx].filtered).sum::<f64>() / r;
        let diff = diffs.iter().sum::<f64>() / r;
        let se = if per_rep.len() > 1 {
            (diffs.iter().map(|d| (d - diff).powi(2)).sum::<f64>() / (r - 1.0) / r).sqrt()
        } else {
            per_rep[0][idx].difference_se
        };
        let row = |method: String, value: f64, err: Option<f64>| EstimateRow {
            horizon: Some(cfg.horizon),
            burn_in: Some(cfg.burn_in),
            dt: Some(cfg.dt),
            seed: Some(cfg.seed),
            replications: Some(cfg.replications),
            ..EstimateRow::reference(spec.sigma, &method, value, err)
        };
        art.estimates.push(row(format!("ergodic_pathwise_{name}"), pathwise, None));
        art.estimates.push(row(format!("ergodic_filtered_{name}"), filtered, None));
        art.estimates.push(row(format!("ergodic_difference_{name}"), diff, Some(se)));
        art.verdicts.push(VerdictRow::within(
            spec.sigma,
            &format!("ergodic_identity_{name}"),
            diff,
            -3.0 * se,
            3.0 * se,
        ));
    }
    Ok(())
}
