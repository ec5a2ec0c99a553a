//! Flat `key=value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Indices are
//! 1-based. Off-diagonal rates `lambda.i.j`, levels `h.i`, `d` and `sigma`
//! are required; everything else has a default that is echoed to
//! `meta.txt`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use wonham_core::lyapunov::default_burn_in;
use wonham_core::model::{is_simplex, GeneratorMatrix, ModelSpec, TOLERANCES};
use wonham_core::Error as CoreError;

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_HORIZON: f64 = 200.0;
pub const DEFAULT_REPLICATIONS: usize = 100;
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Simulate,
    GammaMc,
    GammaQuad,
    Lyapunov,
    Bounds,
    Couple,
    ErgodicAvg,
    SnrSweep,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Simulate,
        Experiment::GammaMc,
        Experiment::GammaQuad,
        Experiment::Lyapunov,
        Experiment::Bounds,
        Experiment::Couple,
        Experiment::ErgodicAvg,
        Experiment::SnrSweep,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::GammaMc => "gamma-mc",
            Experiment::GammaQuad => "gamma-quad",
            Experiment::Lyapunov => "lyapunov",
            Experiment::Bounds => "bounds",
            Experiment::Couple => "couple",
            Experiment::ErgodicAvg => "ergodic-avg",
            Experiment::SnrSweep => "snr-sweep",
        }
    }
}

impl FromStr for Experiment {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Experiment::ALL.into_iter().find(|e| e.tag() == s).ok_or(())
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{0}")]
    Global(String),
    /// The model is well formed but its chain is not ergodic.
    #[error("{0}")]
    NonErgodic(String),
}

fn at(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Line {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// `spec.nu` is the primary filter's initial law.
    pub spec: ModelSpec,
    pub nu_bar: Vec<f64>,
    pub dt: f64,
    pub horizon: f64,
    pub burn_in: f64,
    pub replications: usize,
    pub seed: u64,
    pub experiment: Option<Experiment>,
    pub sigma_sweep: Vec<f64>,
    /// Keys filled in by defaults, in the order they were resolved.
    pub defaulted: Vec<&'static str>,
}

impl ExperimentConfig {
    /// Effective configuration in the input format, one key per line.
    pub fn to_config_text(&self) -> String {
        let d = self.spec.dim();
        let mut out = String::new();
        let mut put = |k: String, v: String| {
            out.push_str(&k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        put("d".into(), d.to_string());
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    put(format!("lambda.{}.{}", i + 1, j + 1), num(self.spec.generator.rate(i, j)));
                }
            }
        }
        for (i, h) in self.spec.h.iter().enumerate() {
            put(format!("h.{}", i + 1), num(*h));
        }
        put("sigma".into(), num(self.spec.sigma));
        for (i, v) in self.spec.nu.iter().enumerate() {
            put(format!("nu.{}", i + 1), num(*v));
        }
        for (i, v) in self.nu_bar.iter().enumerate() {
            put(format!("nu_bar.{}", i + 1), num(*v));
        }
        put("dt".into(), num(self.dt));
        put("horizon".into(), num(self.horizon));
        put("burn_in".into(), num(self.burn_in));
        put("replications".into(), self.replications.to_string());
        put("seed".into(), self.seed.to_string());
        if let Some(e) = self.experiment {
            put("experiment".into(), e.tag().into());
        }
        if !self.sigma_sweep.is_empty() {
            put(
                "sigma_sweep".into(),
                self.sigma_sweep.iter().map(|s| num(*s)).collect::<Vec<_>>().join(","),
            );
        }
        out
    }
}

/// Full-precision decimal form used in every output file.
pub fn num(x: f64) -> String {
    // adding +0 turns -0 into +0
    format!("{:.16e}", x + 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Key {
    D,
    Lambda(usize, usize),
    H(usize),
    Sigma,
    Nu(usize),
    NuBar(usize),
    Dt,
    Horizon,
    BurnIn,
    Replications,
    Seed,
    Experiment,
    SigmaSweep,
}

fn parse_index(s: &str, line: usize, key: &str) -> Result<usize, ConfigError> {
    match s.parse::<usize>() {
        Ok(i) if i >= 1 => Ok(i - 1),
        _ => Err(at(line, format!("bad index `{s}` in key `{key}` (indices start at 1)"))),
    }
}

fn parse_key(key: &str, line: usize) -> Result<Key, ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    let k = match parts.as_slice() {
        ["d"] => Key::D,
        ["sigma"] => Key::Sigma,
        ["dt"] => Key::Dt,
        ["horizon"] => Key::Horizon,
        ["burn_in"] => Key::BurnIn,
        ["replications"] => Key::Replications,
        ["seed"] => Key::Seed,
        ["experiment"] => Key::Experiment,
        ["sigma_sweep"] => Key::SigmaSweep,
        ["lambda", i, j] => {
            let (i, j) = (parse_index(i, line, key)?, parse_index(j, line, key)?);
            if i == j {
                return Err(at(line, format!("`{key}`: diagonal entries are derived")));
            }
            Key::Lambda(i, j)
        }
        ["h", i] => Key::H(parse_index(i, line, key)?),
        ["nu", i] => Key::Nu(parse_index(i, line, key)?),
        ["nu_bar", i] => Key::NuBar(parse_index(i, line, key)?),
        _ => return Err(at(line, format!("unknown key `{key}`"))),
    };
    Ok(k)
}

fn parse_f64(v: &str, line: usize, key: &str) -> Result<f64, ConfigError> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(at(line, format!("`{key}`: malformed number `{v}`"))),
    }
}

struct Entry {
    line: usize,
    key: String,
    value: String,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut entries: BTreeMap<Key, Entry> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| at(line, format!("expected `key=value`, found `{s}`")))?;
        let (k, v) = (k.trim(), v.trim());
        let key = parse_key(k, line)?;
        if let Some(prev) = entries.get(&key) {
            return Err(at(line, format!("duplicate key `{k}` (first set on line {})", prev.line)));
        }
        entries.insert(
            key,
            Entry {
                line,
                key: k.to_string(),
                value: v.to_string(),
            },
        );
    }

    let float = |key: Key| -> Result<Option<(f64, usize)>, ConfigError> {
        entries
            .get(&key)
            .map(|e| parse_f64(&e.value, e.line, &e.key).map(|x| (x, e.line)))
            .transpose()
    };
    let missing = |name: &str| ConfigError::Global(format!("missing required key `{name}`"));

    let d_entry = entries.get(&Key::D).ok_or_else(|| missing("d"))?;
    let d = match d_entry.value.parse::<usize>() {
        Ok(d) if d >= 2 => d,
        _ => return Err(at(d_entry.line, format!("`d` must be an integer ≥ 2, found `{}`", d_entry.value))),
    };
    for (key, e) in &entries {
        let out_of_range = match *key {
            Key::Lambda(i, j) => i >= d || j >= d,
            Key::H(i) | Key::Nu(i) | Key::NuBar(i) => i >= d,
            _ => false,
        };
        if out_of_range {
            return Err(at(e.line, format!("`{}`: index exceeds d = {d}", e.key)));
        }
    }

    let mut rates = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            if i != j {
                let (r, line) = float(Key::Lambda(i, j))?.ok_or_else(|| missing(&format!("lambda.{}.{}", i + 1, j + 1)))?;
                if r < 0.0 {
                    return Err(at(line, format!("`lambda.{}.{}` must be non-negative", i + 1, j + 1)));
                }
                rates[i][j] = r;
            }
        }
    }
    let generator = GeneratorMatrix::from_off_diagonal(d, |i, j| rates[i][j]);
    let h = (0..d)
        .map(|i| float(Key::H(i))?.map(|(x, _)| x).ok_or_else(|| missing(&format!("h.{}", i + 1))))
        .collect::<Result<Vec<_>, _>>()?;
    let (sigma, sigma_line) = float(Key::Sigma)?.ok_or_else(|| missing("sigma"))?;
    if sigma <= 0.0 {
        return Err(at(sigma_line, "`sigma` must be positive"));
    }

    let mut defaulted = Vec::new();
    let vector = |name: &str, key: fn(usize) -> Key| -> Result<Option<Vec<f64>>, ConfigError> {
        let given: Vec<Option<f64>> = (0..d)
            .map(|i| float(key(i)).map(|o| o.map(|(x, _)| x)))
            .collect::<Result<_, _>>()?;
        if given.iter().all(Option::is_none) {
            return Ok(None);
        }
        given
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| missing(&format!("{name}.{} (give all or none)", i + 1))))
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    };

    let stationary = ModelSpec::stationary(generator.clone(), h.clone(), sigma).map_err(model_error)?;
    let nu = match vector("nu", Key::Nu)? {
        Some(v) => {
            if !is_simplex(&v, TOLERANCES.structural) {
                let line = entries.get(&Key::Nu(0)).map_or(0, |e| e.line);
                return Err(at(line, "`nu` is not a probability vector"));
            }
            v
        }
        None => {
            defaulted.push("nu");
            stationary.nu.clone()
        }
    };
    let spec = ModelSpec::new(generator, h, sigma, nu).map_err(model_error)?;
    let nu_bar = match vector("nu_bar", Key::NuBar)? {
        Some(v) => {
            if !is_simplex(&v, TOLERANCES.structural) {
                let line = entries.get(&Key::NuBar(0)).map_or(0, |e| e.line);
                return Err(at(line, "`nu_bar` is not a probability vector"));
            }
            v
        }
        None => {
            defaulted.push("nu_bar");
            default_nu_bar(&spec.nu)
        }
    };

    let dt = match float(Key::Dt)? {
        Some((x, line)) if x <= 0.0 => return Err(at(line, "`dt` must be positive")),
        Some((x, _)) => x,
        None => {
            defaulted.push("dt");
            DEFAULT_DT
        }
    };
    let (horizon, horizon_line) = match float(Key::Horizon)? {
        Some((x, line)) if x <= 0.0 => return Err(at(line, "`horizon` must be positive")),
        Some((x, line)) => (x, line),
        None => {
            defaulted.push("horizon");
            (DEFAULT_HORIZON, 0)
        }
    };
    let burn_in = match float(Key::BurnIn)? {
        Some((x, line)) if x < 0.0 => return Err(at(line, "`burn_in` must be non-negative")),
        Some((x, _)) => x,
        None => {
            defaulted.push("burn_in");
            default_burn_in(&spec).map_err(model_error)?
        }
    };
    if horizon <= burn_in {
        let msg = format!("`horizon` ({horizon}) must exceed `burn_in` ({burn_in})");
        return Err(if horizon_line > 0 { at(horizon_line, msg) } else { ConfigError::Global(msg) });
    }
    let replications = match entries.get(&Key::Replications) {
        Some(e) => match e.value.parse::<usize>() {
            Ok(0) => return Err(at(e.line, "`replications` must be at least 1")),
            Ok(n) => n,
            Err(_) => return Err(at(e.line, format!("`replications`: malformed count `{}`", e.value))),
        },
        None => {
            defaulted.push("replications");
            DEFAULT_REPLICATIONS
        }
    };
    let seed = match entries.get(&Key::Seed) {
        Some(e) => e
            .value
            .parse::<u64>()
            .map_err(|_| at(e.line, format!("`seed`: malformed 64-bit integer `{}`", e.value)))?,
        None => {
            defaulted.push("seed");
            DEFAULT_SEED
        }
    };
    let experiment = entries
        .get(&Key::Experiment)
        .map(|e| {
            e.value
                .parse::<Experiment>()
                .map_err(|_| at(e.line, format!("unknown experiment `{}`", e.value)))
        })
        .transpose()?;
    let sigma_sweep = match entries.get(&Key::SigmaSweep) {
        Some(e) => e
            .value
            .split(',')
            .map(|s| match parse_f64(s.trim(), e.line, &e.key)? {
                x if x > 0.0 => Ok(x),
                _ => Err(at(e.line, "`sigma_sweep` entries must be positive")),
            })
            .collect::<Result<Vec<_>, _>>()?,
        None => Vec::new(),
    };

    Ok(ExperimentConfig {
        spec,
        nu_bar,
        dt,
        horizon,
        burn_in,
        replications,
        seed,
        experiment,
        sigma_sweep,
        defaulted,
    })
}

/// Point mass on the least likely state under `nu` (lowest index on ties).
pub fn default_nu_bar(nu: &[f64]) -> Vec<f64> {
    let mut best = 0;
    for (i, &p) in nu.iter().enumerate() {
        if p < nu[best] {
            best = i;
        }
    }
    let mut v = vec![0.0; nu.len()];
    v[best] = 1.0;
    v
}

fn model_error(e: CoreError) -> ConfigError {
    match e {
        CoreError::NonErgodic(m) => ConfigError::NonErgodic(format!("chain is not ergodic: {m}")),
        other => ConfigError::Global(other.to_string()),
    }
}
