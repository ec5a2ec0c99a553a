//! Exact simulation of the hidden chain and of its noisy observations.

use std::io::{self, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// What a random stream is used for. Each purpose gets an independent key so
/// that, e.g., changing the noise does not perturb the chain path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Chain,
    Noise,
    Init,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Chain => 0x6368_6169_6e00_0001,
            Purpose::Noise => 0x6e6f_6973_6500_0002,
            Purpose::Init => 0x696e_6974_0000_0003,
        }
    }
}

/// Replication-indexed random stream.
///
/// `(master_seed, stream_id, purpose)` maps to a ChaCha8 key and stream
/// number, so replications are reproducible and can run in any order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    pub fn rng(&self, purpose: Purpose) -> ChaCha8Rng {
        let mut state = self.master_seed ^ purpose.tag();
        let mut key = [0u8; 32];
        for chunk in key.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Draws an index from the probability vector `p` by inversion.
fn sample_index(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding slack above the total mass
    p.iter().rposition(|&x| x > 0.0).unwrap_or(p.len() - 1)
}

/// Exact continuous-time trajectory of the hidden chain on `[0, t_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPath {
    pub t_end: f64,
    pub initial_state: usize,
    /// Strictly increasing jump epochs in `(0, t_end]`.
    pub jump_times: Vec<f64>,
    /// `states[0]` is the initial state, `states[k]` the state after jump `k`.
    pub states: Vec<usize>,
}

impl ChainPath {
    pub fn jumps(&self) -> usize {
        self.jump_times.len()
    }

    pub fn state_at(&self, t: f64) -> usize {
        let k = self.jump_times.partition_point(|&s| s <= t);
        self.states[k]
    }

    /// Time spent in each state over `[0, t_end]`.
    pub fn occupation_times(&self, d: usize) -> Vec<f64> {
        let mut occ = vec![0.0; d];
        let mut last = 0.0;
        for (k, &s) in self.jump_times.iter().enumerate() {
            occ[self.states[k]] += s - last;
            last = s;
        }
        occ[*self.states.last().unwrap()] += self.t_end - last;
        occ
    }

    /// `∫_{k dt}^{(k+1) dt} f(X_s) ds` for `k = 0..n`, integrated exactly
    /// against the jump epochs.
    pub fn step_integrals(&self, f: &[f64], dt: f64, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n);
        let mut next_jump = 0;
        let mut state = self.states[0];
        for k in 0..n {
            let start = k as f64 * dt;
            let end = (k + 1) as f64 * dt;
            let mut cursor = start;
            let mut acc = 0.0;
            while next_jump < self.jump_times.len() && self.jump_times[next_jump] < end {
                let s = self.jump_times[next_jump];
                acc += f[state] * (s - cursor);
                cursor = s;
                next_jump += 1;
                state = self.states[next_jump];
            }
            acc += f[state] * (end - cursor);
            out.push(acc);
        }
        out
    }

    /// State at the grid points `k dt`, `k = 0..=n`.
    pub fn grid_states(&self, dt: f64, n: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(n + 1);
        let mut next_jump = 0;
        for k in 0..=n {
            let t = k as f64 * dt;
            while next_jump < self.jump_times.len() && self.jump_times[next_jump] <= t {
                next_jump += 1;
            }
            out.push(self.states[next_jump]);
        }
        out
    }

    /// CSV with columns `t,state`; one row for the start and one per jump.
    /// States are written 1-based.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,state")?;
        writeln!(w, "{:.16e},{}", 0.0, self.states[0] + 1)?;
        for (t, s) in self.jump_times.iter().zip(&self.states[1..]) {
            writeln!(w, "{:.16e},{}", t, s + 1)?;
        }
        Ok(())
    }
}

/// Gillespie simulation of the chain: exponential holding times, jump
/// targets drawn proportionally to the off-diagonal rates.
pub fn sample_chain(spec: &ModelSpec, t_end: f64, stream: &RngStream) -> Result<ChainPath> {
    if !(t_end > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {t_end}")));
    }
    let g = &spec.generator;
    let d = g.dim();
    if let Some(i) = (0..d).find(|&i| g.exit_rate(i) <= 0.0) {
        return Err(Error::NonErgodic(format!("state {} is absorbing", i + 1)));
    }
    let jump_law: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let exit = g.exit_rate(i);
            (0..d)
                .map(|j| if i == j { 0.0 } else { g.rate(i, j) / exit })
                .collect()
        })
        .collect();

    let mut init = stream.rng(Purpose::Init);
    let mut rng = stream.rng(Purpose::Chain);
    let initial_state = sample_index(&spec.nu, init.random::<f64>());
    let mut state = initial_state;
    let mut t = 0.0;
    let mut jump_times = Vec::new();
    let mut states = vec![state];
    loop {
        let hold: f64 = rng.sample(Exp1);
        t += hold / g.exit_rate(state);
        if t > t_end {
            break;
        }
        state = sample_index(&jump_law[state], rng.random::<f64>());
        jump_times.push(t);
        states.push(state);
    }
    Ok(ChainPath {
        t_end,
        initial_state,
        jump_times,
        states,
    })
}

/// Observation increments `ΔY_k = ∫ h(X_s) ds + σ ΔB_k` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationPath {
    pub dt: f64,
    pub increments: Vec<f64>,
}

impl ObservationPath {
    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.increments.len() as f64
    }

    /// Merges `factor` consecutive increments. Drift and noise are both
    /// additive, so the result is an exact sample of the coarser grid driven
    /// by the same chain and Brownian path.
    pub fn coarsen(&self, factor: usize) -> ObservationPath {
        assert!(factor >= 1);
        ObservationPath {
            dt: self.dt * factor as f64,
            increments: self
                .increments
                .chunks_exact(factor)
                .map(|c| c.iter().sum())
                .collect(),
        }
    }

    /// Increments `from..to` as a standalone path.
    pub fn slice(&self, from: usize, to: usize) -> ObservationPath {
        ObservationPath {
            dt: self.dt,
            increments: self.increments[from..to].to_vec(),
        }
    }

    /// CSV with columns `k,dY`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "k,dY")?;
        for (k, dy) in self.increments.iter().enumerate() {
            writeln!(w, "{k},{dy:.16e}")?;
        }
        Ok(())
    }
}

/// Number of grid steps of size `dt` in `t_end`, or an error when `dt` does
/// not divide `t_end`.
pub fn grid_steps(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let n = (t_end / dt).round();
    if n < 1.0 || (n * dt - t_end).abs() > 1e-9 * t_end.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "dt = {dt} does not divide the horizon {t_end}"
        )));
    }
    Ok(n as usize)
}

pub fn sample_observation(
    path: &ChainPath,
    spec: &ModelSpec,
    dt: f64,
    stream: &RngStream,
) -> Result<ObservationPath> {
    let n = grid_steps(path.t_end, dt)?;
    let drift = path.step_integrals(&spec.h, dt, n);
    let scale = spec.sigma * dt.sqrt();
    let mut rng = stream.rng(Purpose::Noise);
    let increments = drift
        .into_iter()
        .map(|a| {
            let xi: f64 = rng.sample(StandardNormal);
            a + scale * xi
        })
        .collect();
    Ok(ObservationPath { dt, increments })
}

/// How the initial states of the two coupled chains are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingStart {
    /// Independent draws from the two initial laws.
    Independent,
    /// One shared uniform pushed through both inverse CDFs; identical laws
    /// then give identical starting states.
    Common,
}

/// First meeting time of two chains driven by one Poisson clock.
///
/// Both chains read the same marked event stream: an event with mark
/// `(i, j)` fires at rate `λ_ij` and moves any chain sitting in `i` to `j`.
/// This is the Poisson-matrix construction of the chain, and two paths stay
/// merged once they meet. Returns `None` if they have not met by `t_max`.
pub fn coupling_time(
    spec: &ModelSpec,
    nu2: &[f64],
    t_max: f64,
    stream: &RngStream,
    start: CouplingStart,
) -> Result<Option<f64>> {
    let clock = MarkedClock::new(spec)?;
    let mut init = stream.rng(Purpose::Init);
    let u = init.random::<f64>();
    let mut x = sample_index(&spec.nu, u);
    let mut y = match start {
        CouplingStart::Independent => sample_index(nu2, init.random::<f64>()),
        CouplingStart::Common => sample_index(nu2, u),
    };
    if x == y {
        return Ok(Some(0.0));
    }
    let mut rng = stream.rng(Purpose::Chain);
    let mut t = 0.0;
    loop {
        let e: f64 = rng.sample(Exp1);
        t += e / clock.total;
        if t > t_max {
            return Ok(None);
        }
        let (from, to) = clock.marks[sample_index(&clock.weights, rng.random::<f64>())];
        if x == from {
            x = to;
        }
        if y == from {
            y = to;
        }
        if x == y {
            return Ok(Some(t));
        }
    }
}

struct MarkedClock {
    total: f64,
    marks: Vec<(usize, usize)>,
    weights: Vec<f64>,
}

impl MarkedClock {
    fn new(spec: &ModelSpec) -> Result<Self> {
        let g = &spec.generator;
        let d = g.dim();
        let mut marks = Vec::new();
        let mut rates = Vec::new();
        for i in 0..d {
            for j in 0..d {
                if i != j && g.rate(i, j) > 0.0 {
                    marks.push((i, j));
                    rates.push(g.rate(i, j));
                }
            }
        }
        let total: f64 = rates.iter().sum();
        if !(total > 0.0) {
            return Err(Error::NonErgodic("generator has no transitions".into()));
        }
        Ok(Self {
            total,
            marks,
            weights: rates.iter().map(|r| r / total).collect(),
        })
    }
}

/// Empirical survival function `P(τ ≥ n)` of the coupling time at integer `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTail {
    pub replications: usize,
    /// `survivors[n]` = number of replications with `τ ≥ n`, `n = 0..=n_max`.
    pub survivors: Vec<usize>,
}

/// Geometric decay estimate of a survival table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailSlope {
    /// Estimated `log P(τ ≥ n+1) - log P(τ ≥ n)`.
    pub slope: f64,
    pub std_error: f64,
}

impl CouplingTail {
    pub fn survival(&self, n: usize) -> f64 {
        self.survivors[n] as f64 / self.replications as f64
    }

    /// Log-slope of the tail over `n ∈ [1, n_max]` under a geometric model.
    ///
    /// The per-step survival probability is estimated by the ratio
    /// `Σ_{n=2..N} S_n / Σ_{n=1..N-1} S_n` (the discrete-time maximum
    /// likelihood estimate), which stays finite when the far tail is empty.
    /// The standard error is the delta-method error of its logarithm.
    pub fn log_slope(&self) -> Option<TailSlope> {
        let n_max = self.survivors.len() - 1;
        if n_max < 2 {
            return None;
        }
        let at_risk: usize = self.survivors[1..n_max].iter().sum();
        let survived: usize = self.survivors[2..=n_max].iter().sum();
        if at_risk == 0 || survived == 0 {
            return None;
        }
        let p = survived as f64 / at_risk as f64;
        Some(TailSlope {
            slope: p.ln(),
            std_error: ((1.0 - p) / (p * at_risk as f64)).sqrt(),
        })
    }
}

/// Runs `replications` coupling experiments and tabulates `P(τ ≥ n)` for
/// `n = 0..=n_max`. Replication `r` uses stream `(seed, r)`.
pub fn coupling_tail(
    spec: &ModelSpec,
    nu2: &[f64],
    n_max: usize,
    replications: usize,
    master_seed: u64,
    start: CouplingStart,
) -> Result<CouplingTail> {
    let mut survivors = vec![0usize; n_max + 1];
    for r in 0..replications {
        let tau = coupling_time(spec, nu2, n_max as f64, &RngStream::new(master_seed, r as u64), start)?;
        for (n, s) in survivors.iter_mut().enumerate() {
            let alive = match tau {
                Some(t) => t >= n as f64,
                None => true,
            };
            if alive {
                *s += 1;
            }
        }
    }
    Ok(CouplingTail {
        replications,
        survivors,
    })
}
