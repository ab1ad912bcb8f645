//! Metropolis-Hastings on the cube `[-1, 1]^J`.
//!
//! Four proposals are supported:
//!
//! * `IS`: a fresh prior draw, independent of the current state.
//! * `RWM(eps)`: `u + eps * xi` with `xi` standard normal. Candidates may leave
//!   the cube, in which case they are rejected.
//! * `RURWM(eps)`: `R(u_j + eps * xi_j)` with `xi_j ~ U(-1, 1)`.
//! * `RSRWM(eps)`: `R(u_j + eps * xi_j)` with `xi_j ~ N(0, 1)`.
//!
//! `R` folds the real line onto `[-1, 1]` by repeated reflection at the
//! boundaries. The folded walks are reversible with respect to the uniform
//! prior, so their acceptance probability reduces to `min(1, L(v) / L(u))`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::field::{sample_prior, BasisSpec, CoefficientVector};
use crate::posterior::LogLikelihood;
use crate::rng::ChainRng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProposalKind {
    Independence,
    RandomWalk { eps: f64 },
    ReflectedUniform { eps: f64 },
    ReflectedGaussian { eps: f64 },
}

/// Proposal family without its step size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Is,
    Rwm,
    Rurwm,
    Rsrwm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Is, Algorithm::Rwm, Algorithm::Rurwm, Algorithm::Rsrwm];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Is => "IS",
            Algorithm::Rwm => "RWM",
            Algorithm::Rurwm => "RURWM",
            Algorithm::Rsrwm => "RSRWM",
        }
    }

    /// Attach a step size. `eps` is ignored for `IS`.
    pub fn with_eps(self, eps: f64) -> Result<ProposalKind> {
        let kind = match self {
            Algorithm::Is => ProposalKind::Independence,
            Algorithm::Rwm => ProposalKind::RandomWalk { eps },
            Algorithm::Rurwm => ProposalKind::ReflectedUniform { eps },
            Algorithm::Rsrwm => ProposalKind::ReflectedGaussian { eps },
        };
        kind.validate()?;
        Ok(kind)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "IS" => Ok(Algorithm::Is),
            "RWM" => Ok(Algorithm::Rwm),
            "RURWM" => Ok(Algorithm::Rurwm),
            "RSRWM" => Ok(Algorithm::Rsrwm),
            other => Err(Error::InvalidParameter(format!("unknown algorithm `{other}`"))),
        }
    }
}

impl ProposalKind {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            ProposalKind::Independence => Algorithm::Is,
            ProposalKind::RandomWalk { .. } => Algorithm::Rwm,
            ProposalKind::ReflectedUniform { .. } => Algorithm::Rurwm,
            ProposalKind::ReflectedGaussian { .. } => Algorithm::Rsrwm,
        }
    }

    pub fn eps(&self) -> Option<f64> {
        match *self {
            ProposalKind::Independence => None,
            ProposalKind::RandomWalk { eps }
            | ProposalKind::ReflectedUniform { eps }
            | ProposalKind::ReflectedGaussian { eps } => Some(eps),
        }
    }

    /// RURWM with `eps = 0` is allowed as the degenerate identity proposal.
    pub fn validate(&self) -> Result<()> {
        match *self {
            ProposalKind::Independence => Ok(()),
            ProposalKind::ReflectedUniform { eps } if eps >= 0.0 && eps.is_finite() => Ok(()),
            ProposalKind::RandomWalk { eps } | ProposalKind::ReflectedGaussian { eps }
                if eps > 0.0 && eps.is_finite() =>
            {
                Ok(())
            }
            other => Err(Error::InvalidParameter(format!(
                "step size must be positive, got {:?}",
                other.eps()
            ))),
        }
    }
}

/// Folds `x` onto `[-1, 1]` by reflecting at the boundaries.
pub fn reflect(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::InvalidParameter(format!("cannot reflect {x}")));
    }
    Ok(reflect_finite(x))
}

#[inline]
fn reflect_finite(x: f64) -> f64 {
    if (-1.0..=1.0).contains(&x) {
        return x;
    }
    let mut y = x.rem_euclid(4.0);
    if y >= 4.0 {
        y -= 4.0;
    }
    if y <= 1.0 {
        y
    } else if y < 3.0 {
        2.0 - y
    } else {
        y - 4.0
    }
}

/// Writes a candidate for `current` into `out`. `RWM` candidates are returned
/// as raw vectors and may lie outside the cube.
pub fn propose_into<R: Rng + ?Sized>(
    kind: &ProposalKind,
    current: &[f64],
    rng: &mut R,
    out: &mut Vec<f64>,
) {
    out.clear();
    match *kind {
        ProposalKind::Independence => {
            out.extend(sample_prior(rng, current.len()).into_inner());
        }
        ProposalKind::RandomWalk { eps } => {
            out.extend(current.iter().map(|u| {
                let xi: f64 = rng.sample(StandardNormal);
                u + eps * xi
            }));
        }
        ProposalKind::ReflectedUniform { eps } => {
            out.extend(current.iter().map(|u| {
                let xi: f64 = rng.random_range(-1.0..=1.0);
                reflect_finite(u + eps * xi)
            }));
        }
        ProposalKind::ReflectedGaussian { eps } => {
            out.extend(current.iter().map(|u| {
                let xi: f64 = rng.sample(StandardNormal);
                reflect_finite(u + eps * xi)
            }));
        }
    }
}

pub fn propose<R: Rng + ?Sized>(kind: &ProposalKind, current: &[f64], rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(current.len());
    propose_into(kind, current, rng, &mut out);
    out
}

fn in_cube(v: &[f64]) -> bool {
    v.iter().all(|x| (-1.0..=1.0).contains(x))
}

/// `min(1, exp(l_cand - l_cur))`, or zero for a `RWM` candidate outside the cube.
pub fn acceptance_prob(kind: &ProposalKind, l_current: f64, l_candidate: f64, candidate: &[f64]) -> f64 {
    if matches!(kind, ProposalKind::RandomWalk { .. }) && !in_cube(candidate) {
        return 0.0;
    }
    (l_candidate - l_current).exp().min(1.0)
}

/// Current point of a chain with its cached log-likelihood.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    u: CoefficientVector,
    log_likelihood: f64,
}

impl ChainState {
    pub fn new<T: LogLikelihood + ?Sized>(u: CoefficientVector, target: &T) -> Result<Self> {
        let log_likelihood = target.log_likelihood(u.as_slice())?;
        Ok(Self { u, log_likelihood })
    }

    pub fn u(&self) -> &CoefficientVector {
        &self.u
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }
}

/// One accept/reject step. Costs exactly one likelihood evaluation, or none
/// when a `RWM` candidate leaves the cube.
pub fn mh_step<R: Rng + ?Sized, T: LogLikelihood + ?Sized>(
    kind: &ProposalKind,
    state: &mut ChainState,
    rng: &mut R,
    target: &T,
    scratch: &mut Vec<f64>,
) -> Result<bool> {
    propose_into(kind, state.u.as_slice(), rng, scratch);
    let outside = matches!(kind, ProposalKind::RandomWalk { .. }) && !in_cube(scratch);
    let l_candidate = if outside {
        f64::NEG_INFINITY
    } else {
        target.log_likelihood(scratch)?
    };
    let alpha = acceptance_prob(kind, state.log_likelihood, l_candidate, scratch);
    let threshold: f64 = rng.random();
    if alpha > threshold {
        state.u = CoefficientVector::new(std::mem::take(scratch))?;
        state.log_likelihood = l_candidate;
        debug_assert!(
            (target.log_likelihood(state.u.as_slice()).unwrap() - l_candidate).abs() <= 1e-9 * (1.0 + l_candidate.abs())
        );
        Ok(true)
    } else {
        Ok(false)
    }
}

/// A scalar summary of the chain state recorded at every retained step.
#[derive(Clone, Debug, PartialEq)]
pub enum Functional {
    Coefficient(usize),
    LogLikelihood,
    /// `a(u)(x)`, stored as `abar` plus the basis weights at `x`.
    FieldAt { x: f64, offset: f64, weights: Vec<f64> },
}

impl Functional {
    /// Parses `u<j>`, `loglik`, or `a@<x>`.
    pub fn parse(id: &str, spec: &BasisSpec) -> Result<Self> {
        let bad = || Error::UnknownFunctional(id.to_string());
        if id == "loglik" {
            return Ok(Functional::LogLikelihood);
        }
        if let Some(j) = id.strip_prefix('u') {
            let j: usize = j.parse().map_err(|_| bad())?;
            if j >= spec.dim() {
                return Err(bad());
            }
            return Ok(Functional::Coefficient(j));
        }
        if let Some(x) = id.strip_prefix("a@") {
            let x: f64 = x.parse().map_err(|_| bad())?;
            if !(0.0..=1.0).contains(&x) {
                return Err(bad());
            }
            let mut weights = vec![0.0; spec.dim()];
            let g = spec.gamma();
            weights[0] = g[0];
            for j in 1..=spec.k() {
                let (s, c) = (2.0 * std::f64::consts::PI * j as f64 * x).sin_cos();
                weights[2 * j - 1] = g[2 * j - 1] * c;
                weights[2 * j] = g[2 * j] * s;
            }
            return Ok(Functional::FieldAt { x, offset: spec.abar(), weights });
        }
        Err(bad())
    }

    /// `u0`, `loglik`, `a@0.5`.
    pub fn defaults(spec: &BasisSpec) -> Vec<Functional> {
        ["u0", "loglik", "a@0.5"]
            .iter()
            .map(|id| Functional::parse(id, spec).expect("default functionals are valid"))
            .collect()
    }

    pub fn id(&self) -> String {
        match self {
            Functional::Coefficient(j) => format!("u{j}"),
            Functional::LogLikelihood => "loglik".to_string(),
            Functional::FieldAt { x, .. } => format!("a@{x}"),
        }
    }

    pub fn evaluate(&self, state: &ChainState) -> f64 {
        match self {
            Functional::Coefficient(j) => state.u.as_slice()[*j],
            Functional::LogLikelihood => state.log_likelihood,
            Functional::FieldAt { offset, weights, .. } => {
                offset + weights.iter().zip(state.u.as_slice()).map(|(w, u)| w * u).sum::<f64>()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    /// Total steps, burn-in included.
    pub n_steps: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Store the full state every `k` retained steps.
    pub dump_every: Option<usize>,
}

impl RunOptions {
    pub fn new(n_steps: usize, burn_in: usize, seed: u64) -> Self {
        Self { n_steps, burn_in, seed, dump_every: None }
    }
}

/// Functional time series and acceptance statistics of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainOutput {
    pub algorithm: Algorithm,
    pub eps: Option<f64>,
    pub functional_ids: Vec<String>,
    /// One series per functional, `n_steps - burn_in` values each.
    pub series: Vec<Vec<f64>>,
    /// Accepted moves after burn-in.
    pub accept_count: usize,
    pub n_steps: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub states: Vec<(usize, Vec<f64>)>,
    pub final_state: ChainState,
}

impl ChainOutput {
    pub fn retained(&self) -> usize {
        self.n_steps - self.burn_in
    }

    pub fn accept_rate(&self) -> f64 {
        self.accept_count as f64 / self.retained() as f64
    }

    pub fn series_for(&self, id: &str) -> Option<&[f64]> {
        self.functional_ids
            .iter()
            .position(|f| f == id)
            .map(|i| self.series[i].as_slice())
    }
}

/// Runs `n_steps` MH steps from `init` with a generator seeded from
/// `opts.seed`, recording `functionals` after burn-in.
pub fn run_chain<T: LogLikelihood + ?Sized>(
    kind: &ProposalKind,
    init: ChainState,
    opts: &RunOptions,
    functionals: &[Functional],
    target: &T,
) -> Result<ChainOutput> {
    kind.validate()?;
    if opts.n_steps <= opts.burn_in {
        return Err(Error::InvalidParameter(format!(
            "n_steps ({}) must exceed burn_in ({})",
            opts.n_steps, opts.burn_in
        )));
    }
    if let Some(f) = functionals.iter().find(|f| matches!(f, Functional::Coefficient(j) if *j >= init.u.len())) {
        return Err(Error::UnknownFunctional(f.id()));
    }
    let mut rng = ChainRng::seed_from_u64(opts.seed);
    let retained = opts.n_steps - opts.burn_in;
    let mut series: Vec<Vec<f64>> = functionals.iter().map(|_| Vec::with_capacity(retained)).collect();
    let mut state = init;
    let mut scratch = Vec::with_capacity(state.u.len());
    let mut accept_count = 0;
    let mut states = Vec::new();
    for step in 0..opts.n_steps {
        let moved = mh_step(kind, &mut state, &mut rng, target, &mut scratch)?;
        if step < opts.burn_in {
            continue;
        }
        accept_count += moved as usize;
        for (s, f) in series.iter_mut().zip(functionals) {
            s.push(f.evaluate(&state));
        }
        if let Some(k) = opts.dump_every {
            if (step - opts.burn_in) % k.max(1) == 0 {
                states.push((step, state.u.as_slice().to_vec()));
            }
        }
    }
    Ok(ChainOutput {
        algorithm: kind.algorithm(),
        eps: kind.eps(),
        functional_ids: functionals.iter().map(Functional::id).collect(),
        series,
        accept_count,
        n_steps: opts.n_steps,
        burn_in: opts.burn_in,
        seed: opts.seed,
        states,
        final_state: state,
    })
}

/// Transition density of the reflected uniform walk on `[-1, 1]`,
/// `0 < eps < 1`.
///
/// Inside the band `|x - y| <= eps` the density is `1 / (2 eps)`, doubled in
/// the two corners where a single reflection maps onto the band again.
pub fn rurwm_density(x: f64, y: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(-1.0..=1.0).contains(&x) || !(-1.0..=1.0).contains(&y) {
        return Err(Error::InvalidParameter(format!("({x}, {y}) lies outside [-1, 1]^2")));
    }
    let s = x + y;
    let corner = s <= -2.0 + eps || s >= 2.0 - eps;
    let w = if corner {
        2.0
    } else if (x - y).abs() <= eps {
        1.0
    } else {
        0.0
    };
    Ok(w / (2.0 * eps))
}
