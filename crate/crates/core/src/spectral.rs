//! Finite-state spectral laboratory.
//!
//! Reversible kernels on a finite state space stand in for the continuous
//! operators: their spectral gaps, conductances and Metropolis-Hastings
//! transforms can be computed exactly, which lets the gap-transfer bounds,
//! Cheeger's inequality and the reflected-walk gap be checked numerically.
//!
//! Two gap conventions are reported side by side:
//!
//! * the *absolute* gap `1 - max |lambda|` over the non-unit spectrum, which
//!   is the operator-norm gap on mean-zero functions;
//! * the *lambda_2* gap `1 - lambda_2`, which is what conductance controls.
//!
//! Reflected walks have negative eigenvalues, so the two differ in general.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::posterior::LikelihoodBounds;
use crate::rng;

/// Largest state space handled by the dense routines.
pub const MAX_STATES: usize = 5000;
/// Largest state space for exhaustive conductance.
pub const MAX_CONDUCTANCE_STATES: usize = 22;

const ROW_SUM_TOL: f64 = 1e-12;
const SYMMETRIZATION_TOL: f64 = 1e-8;

/// Row-stochastic matrix with a stationary distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteKernel {
    p: DMatrix<f64>,
    pi: DVector<f64>,
}

impl FiniteKernel {
    /// Checks shape, non-negativity, row sums and the weights.
    pub fn new(p: DMatrix<f64>, pi: DVector<f64>) -> Result<Self> {
        let n = p.nrows();
        if p.ncols() != n || pi.len() != n || n == 0 {
            return Err(Error::NotStochastic(format!(
                "shape {}x{} with {} weights",
                p.nrows(),
                p.ncols(),
                pi.len()
            )));
        }
        if n > MAX_STATES {
            return Err(Error::TooLarge { size: n, limit: MAX_STATES });
        }
        if let Some(v) = p.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::NotStochastic(format!("negative or NaN entry {v}")));
        }
        for (i, row) in p.row_iter().enumerate() {
            let s: f64 = row.sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::NotStochastic(format!("row {i} sums to {s}")));
            }
        }
        if pi.iter().any(|w| !(*w > 0.0)) || (pi.sum() - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::NotStochastic("weights must be positive and sum to 1".into()));
        }
        Ok(Self { p, pi })
    }

    /// Kernel with uniform weights.
    pub fn uniform(p: DMatrix<f64>) -> Result<Self> {
        let n = p.nrows();
        Self::new(p, DVector::from_element(n, 1.0 / n as f64))
    }

    /// `P_ij = pi_j`: the finite independence sampler.
    pub fn rank_one(pi: DVector<f64>) -> Result<Self> {
        let n = pi.len();
        let p = DMatrix::from_fn(n, n, |_, j| pi[j]);
        Self::new(p, pi)
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::uniform(DMatrix::identity(n, n))
    }

    pub fn n(&self) -> usize {
        self.pi.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.pi
    }

    /// `max |pi_i P_ij - pi_j P_ji|`.
    pub fn reversibility_residual(&self) -> f64 {
        let n = self.n();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.pi[i] * self.p[(i, j)] - self.pi[j] * self.p[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn assert_reversible(&self, tolerance: f64) -> Result<()> {
        let residual = self.reversibility_residual();
        if residual > tolerance {
            return Err(Error::NotReversible { residual, tolerance });
        }
        Ok(())
    }

    /// Same chain with states relabelled: new state `k` is old state `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        let p = DMatrix::from_fn(n, n, |a, b| self.p[(perm[a], perm[b])]);
        let pi = DVector::from_fn(n, |a, _| self.pi[perm[a]]);
        Self::new(p, pi)
    }

    /// `P^steps` with the same weights.
    pub fn power(&self, steps: usize) -> Result<Self> {
        let mut acc = DMatrix::identity(self.n(), self.n());
        let mut base = self.p.clone();
        let mut e = steps;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        // products drift off the simplex by rounding only
        for mut row in acc.row_iter_mut() {
            let s = row.sum();
            row /= s;
        }
        Self::new(acc, self.pi.clone())
    }
}

/// Both gap conventions for one kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct GapReport {
    /// `1 - beta`.
    pub gap: f64,
    /// Largest modulus over the spectrum with one unit eigenvalue removed.
    pub beta: f64,
    /// Largest eigenvalue after the unit eigenvalue.
    pub lambda2: f64,
    /// `1 - lambda2`.
    pub lambda2_gap: f64,
    /// Eigenvalues in decreasing order.
    pub eigenvalues: Vec<f64>,
    pub conductance: Option<f64>,
}

/// Spectrum of a reversible kernel through `D^{1/2} P D^{-1/2}`.
pub fn spectral_gap(kernel: &FiniteKernel) -> Result<GapReport> {
    let n = kernel.n();
    if n > MAX_STATES {
        return Err(Error::TooLarge { size: n, limit: MAX_STATES });
    }
    let sqrt_pi: Vec<f64> = kernel.pi.iter().map(|w| w.sqrt()).collect();
    let s = DMatrix::from_fn(n, n, |i, j| sqrt_pi[i] * kernel.p[(i, j)] / sqrt_pi[j]);
    let mut residual: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            residual = residual.max((s[(i, j)] - s[(j, i)]).abs());
        }
    }
    if residual > SYMMETRIZATION_TOL {
        return Err(Error::NotReversible { residual, tolerance: SYMMETRIZATION_TOL });
    }
    let sym = (&s + s.transpose()) * 0.5;
    let mut eigenvalues: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    let rest = &eigenvalues[1..];
    let beta = rest.iter().fold(0.0f64, |m, v| m.max(v.abs())).min(1.0);
    let lambda2 = rest.first().copied().unwrap_or(0.0).min(1.0);
    Ok(GapReport {
        gap: 1.0 - beta,
        beta,
        lambda2,
        lambda2_gap: 1.0 - lambda2,
        eigenvalues,
        conductance: None,
    })
}

fn flow_matrix(kernel: &FiniteKernel) -> DMatrix<f64> {
    let n = kernel.n();
    DMatrix::from_fn(n, n, |i, j| kernel.pi[i] * kernel.p[(i, j)])
}

/// `min_{pi(A) <= 1/2} sum_{i in A} pi_i P(i, A^c) / pi(A)` by enumerating
/// all subsets in Gray-code order.
pub fn conductance_exact(kernel: &FiniteKernel) -> Result<f64> {
    let n = kernel.n();
    if n > MAX_CONDUCTANCE_STATES {
        return Err(Error::TooLarge { size: n, limit: MAX_CONDUCTANCE_STATES });
    }
    if n < 2 {
        return Err(Error::InvalidParameter("conductance needs at least two states".into()));
    }
    let f = flow_matrix(kernel);
    let mut in_set = vec![false; n];
    let mut mass = 0.0;
    let mut flow = 0.0;
    let mut best = f64::INFINITY;
    let total: u64 = 1 << n;
    for step in 1..total {
        let k = step.trailing_zeros() as usize;
        if in_set[k] {
            in_set[k] = false;
            mass -= kernel.pi[k];
            for j in 0..n {
                if j == k {
                    continue;
                }
                if in_set[j] {
                    flow += f[(j, k)];
                } else {
                    flow -= f[(k, j)];
                }
            }
        } else {
            for j in 0..n {
                if j == k {
                    continue;
                }
                if in_set[j] {
                    flow -= f[(j, k)];
                } else {
                    flow += f[(k, j)];
                }
            }
            in_set[k] = true;
            mass += kernel.pi[k];
        }
        if mass > 0.0 && mass <= 0.5 + 1e-12 {
            best = best.min(flow.max(0.0) / mass);
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheegerReport {
    pub conductance: f64,
    pub lambda2_gap: f64,
    pub abs_gap: f64,
    /// `lambda2_gap - C^2 / 2`.
    pub lower_slack: f64,
    /// `2 C - lambda2_gap`.
    pub upper_slack: f64,
}

impl CheegerReport {
    pub fn holds(&self, slack: f64) -> bool {
        self.lower_slack >= -slack && self.upper_slack >= -slack
    }
}

/// `C^2 / 2 <= 1 - lambda_2 <= 2 C`.
pub fn cheeger_check(kernel: &FiniteKernel) -> Result<CheegerReport> {
    let gaps = spectral_gap(kernel)?;
    let c = conductance_exact(kernel)?;
    Ok(CheegerReport {
        conductance: c,
        lambda2_gap: gaps.lambda2_gap,
        abs_gap: gaps.gap,
        lower_slack: gaps.lambda2_gap - c * c / 2.0,
        upper_slack: 2.0 * c - gaps.lambda2_gap,
    })
}

/// Metropolis-Hastings kernel targeting `mu ∝ L mu_0` from a proposal `q`
/// reversible with respect to `mu_0`.
pub fn mh_finite(q: &FiniteKernel, l_values: &[f64]) -> Result<FiniteKernel> {
    let n = q.n();
    if l_values.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: l_values.len() });
    }
    if let Some(l) = l_values.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(Error::InvalidParameter(format!("likelihood values must be positive, got {l}")));
    }
    let unnorm: Vec<f64> = q.pi.iter().zip(l_values).map(|(w, l)| w * l).collect();
    let z: f64 = unnorm.iter().sum();
    let mu = DVector::from_iterator(n, unnorm.iter().map(|w| w / z));
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut off = 0.0;
        for j in 0..n {
            if i == j || q.p[(i, j)] == 0.0 {
                continue;
            }
            let ratio = (mu[j] * q.p[(j, i)]) / (mu[i] * q.p[(i, j)]);
            let v = q.p[(i, j)] * ratio.min(1.0);
            p[(i, j)] = v;
            off += v;
        }
        p[(i, i)] = (1.0 - off).max(0.0);
    }
    let kernel = FiniteKernel::new(p, mu)?;
    kernel.assert_reversible(1e-12)?;
    Ok(kernel)
}

/// Gap-transfer bounds for the MH kernel built from `q` and `l_values`.
#[derive(Clone, Debug, PartialEq)]
pub struct Theorem31Report {
    pub l_min: f64,
    pub l_max: f64,
    pub proposal_gap: f64,
    pub proposal_abs_gap: f64,
    pub mh_gap: f64,
    pub mh_abs_gap: f64,
    /// `(L_min / L_max)^4 gap_prop^2 / 8`.
    pub lower_bound: f64,
    /// `2 (L_max / L_min)^2 sqrt(gap_prop)`.
    pub upper_bound: f64,
    pub lower_holds: bool,
    pub upper_holds: bool,
    pub lower_tightness: f64,
    pub upper_tightness: f64,
}

fn ratio_of(l_values: &[f64]) -> (f64, f64) {
    let lo = l_values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = l_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Compares the MH gap against the proposal gap. Both sides use the
/// lambda_2 convention; absolute gaps are recorded alongside.
pub fn theorem31_check(q: &FiniteKernel, l_values: &[f64]) -> Result<Theorem31Report> {
    let prop = spectral_gap(q)?;
    let mh = spectral_gap(&mh_finite(q, l_values)?)?;
    let (l_min, l_max) = ratio_of(l_values);
    let r = l_min / l_max;
    let lower_bound = r.powi(4) * prop.lambda2_gap.powi(2) / 8.0;
    let upper_bound = 2.0 / (r * r) * prop.lambda2_gap.max(0.0).sqrt();
    Ok(Theorem31Report {
        l_min,
        l_max,
        proposal_gap: prop.lambda2_gap,
        proposal_abs_gap: prop.gap,
        mh_gap: mh.lambda2_gap,
        mh_abs_gap: mh.gap,
        lower_bound,
        upper_bound,
        lower_holds: mh.lambda2_gap >= lower_bound - 1e-12,
        upper_holds: mh.lambda2_gap <= upper_bound + 1e-12,
        lower_tightness: if lower_bound > 0.0 { mh.lambda2_gap / lower_bound } else { f64::INFINITY },
        upper_tightness: if upper_bound > 0.0 { mh.lambda2_gap / upper_bound } else { f64::NAN },
    })
}

/// Linear-in-ratio bounds `r gap_prop <= gap <= gap_prop / r`, which are
/// an open conjecture; never asserted.
#[derive(Clone, Debug, PartialEq)]
pub struct Remark34Report {
    pub ratio: f64,
    pub proposal_gap: f64,
    pub mh_gap: f64,
    pub lower: f64,
    pub upper: f64,
    pub lower_holds: bool,
    pub upper_holds: bool,
}

pub fn remark34_probe(q: &FiniteKernel, l_values: &[f64]) -> Result<Remark34Report> {
    let prop = spectral_gap(q)?;
    let mh = spectral_gap(&mh_finite(q, l_values)?)?;
    let (l_min, l_max) = ratio_of(l_values);
    let r = l_min / l_max;
    let lower = r * prop.lambda2_gap;
    let upper = prop.lambda2_gap / r;
    Ok(Remark34Report {
        ratio: r,
        proposal_gap: prop.lambda2_gap,
        mh_gap: mh.lambda2_gap,
        lower,
        upper,
        lower_holds: mh.lambda2_gap >= lower - 1e-12,
        upper_holds: mh.lambda2_gap <= upper + 1e-12,
    })
}

/// Step law of a reflected walk.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepKind {
    Uniform,
    Gaussian,
}

/// Second antiderivative of the step density, `Phi2(t) = int_{-inf}^t CDF`.
struct StepIntegrals {
    kind: StepKind,
    eps: f64,
    normal: Normal,
}

impl StepIntegrals {
    fn new(kind: StepKind, eps: f64) -> Self {
        Self { kind, eps, normal: Normal::new(0.0, 1.0).expect("standard normal") }
    }

    fn phi2(&self, t: f64) -> f64 {
        let e = self.eps;
        match self.kind {
            StepKind::Uniform => {
                if t <= -e {
                    0.0
                } else if t >= e {
                    t
                } else {
                    (t + e) * (t + e) / (4.0 * e)
                }
            }
            StepKind::Gaussian => {
                let z = t / e;
                let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
                t * self.normal.cdf(z) + e * pdf
            }
        }
    }

    /// Mass of the step law outside `[-r, r]`.
    fn tail(&self, r: f64) -> f64 {
        match self.kind {
            StepKind::Uniform => {
                if r >= self.eps {
                    0.0
                } else {
                    1.0
                }
            }
            StepKind::Gaussian => 2.0 * self.normal.sf(r / self.eps),
        }
    }

    /// `int_a^b int_c^d q(x - y + s) dy dx`.
    fn diff_block(&self, a: f64, b: f64, c: f64, d: f64, s: f64) -> f64 {
        self.phi2(b - c + s) - self.phi2(a - c + s) - self.phi2(b - d + s) + self.phi2(a - d + s)
    }

    /// `int_a^b int_c^d q(x + y + s) dy dx`.
    fn sum_block(&self, a: f64, b: f64, c: f64, d: f64, s: f64) -> f64 {
        self.phi2(b + d + s) - self.phi2(a + d + s) - self.phi2(b + c + s) + self.phi2(a + c + s)
    }
}

/// Tail certificate used when discretizing Gaussian reflected walks.
pub const WRAP_TAIL_TOL: f64 = 1e-14;

/// Galerkin discretization of the reflected walk `R(x + xi)` on `n_grid`
/// equal cells of `[-1, 1]`: `P_ij` is the probability of landing in cell `j`
/// from a uniform start in cell `i`, computed from the closed-form folded sum
/// `sum_k q(x - y + 4k) + q(x + y + 4k + 2)`.
pub fn discretize_reflected_walk(eps: f64, step: StepKind, n_grid: usize) -> Result<FiniteKernel> {
    if !(eps > 0.0 && eps.is_finite()) || (step == StepKind::Uniform && eps >= 1.0) {
        return Err(Error::InvalidParameter(format!("invalid step size {eps} for {step:?}")));
    }
    if n_grid < 64 {
        return Err(Error::InvalidParameter(format!("n_grid must be at least 64, got {n_grid}")));
    }
    if n_grid > MAX_STATES {
        return Err(Error::TooLarge { size: n_grid, limit: MAX_STATES });
    }
    let steps = StepIntegrals::new(step, eps);
    // terms with |k| > k_max sit at distance >= 4 |k| - 4 from the cube
    let tail_beyond = |k_max: i64| -> f64 {
        (k_max + 1..k_max + 200).map(|m| 4.0 * steps.tail(4.0 * m as f64 - 4.0)).sum()
    };
    let mut k_max: i64 = 1;
    while tail_beyond(k_max) >= WRAP_TAIL_TOL {
        k_max += 1;
        if k_max > 1000 {
            return Err(Error::InvalidParameter(format!("wrapped-sum tail bound not met for eps = {eps}")));
        }
    }
    let h = 2.0 / n_grid as f64;
    let edge = |i: usize| -1.0 + i as f64 * h;
    let mut p = DMatrix::zeros(n_grid, n_grid);
    for i in 0..n_grid {
        let (a, b) = (edge(i), edge(i + 1));
        for j in i..n_grid {
            let (c, d) = (edge(j), edge(j + 1));
            let mut mass = 0.0;
            for k in -k_max..=k_max {
                let shift = 4.0 * k as f64;
                mass += steps.diff_block(a, b, c, d, shift) + steps.sum_block(a, b, c, d, shift + 2.0);
            }
            let v = (mass / h).max(0.0);
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
    for mut row in p.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    let kernel = FiniteKernel::uniform(p)?;
    kernel.assert_reversible(1e-10)?;
    Ok(kernel)
}

/// Gap of the continuous reflected uniform walk from its slowest
/// eigenfunction `sin(pi x / 2)`: `1 - sin(pi eps / 2) / (pi eps / 2)`.
pub fn reflected_uniform_fourier_gap(eps: f64) -> f64 {
    let t = std::f64::consts::PI * eps / 2.0;
    1.0 - t.sin() / t
}

/// `1 - (4/5)^(1 / ceil(4 / eps))`.
pub fn minorization_gap_bound(eps: f64) -> f64 {
    1.0 - 0.8f64.powf(1.0 / (4.0 / eps).ceil())
}

/// `4 eps / 25`.
pub fn linear_gap_bound(eps: f64) -> f64 {
    4.0 * eps / 25.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct Theorem42Row {
    pub eps: f64,
    pub n_grid: usize,
    pub numeric_gap: f64,
    pub numeric_lambda2_gap: f64,
    pub fourier_gap: f64,
    pub minorization_bound: f64,
    pub linear_bound: f64,
    pub numeric_ge_minorization: bool,
    pub minorization_ge_linear: bool,
    pub numeric_ge_linear: bool,
}

/// Discretized reflected-uniform gaps against the claimed lower bounds.
/// Nothing here is asserted.
pub fn theorem42_table(eps_list: &[f64], n_grid: usize) -> Result<Vec<Theorem42Row>> {
    eps_list
        .iter()
        .map(|&eps| {
            let gap = spectral_gap(&discretize_reflected_walk(eps, StepKind::Uniform, n_grid)?)?;
            let mb = minorization_gap_bound(eps);
            let lb = linear_gap_bound(eps);
            Ok(Theorem42Row {
                eps,
                n_grid,
                numeric_gap: gap.gap,
                numeric_lambda2_gap: gap.lambda2_gap,
                fourier_gap: reflected_uniform_fourier_gap(eps),
                minorization_bound: mb,
                linear_bound: lb,
                numeric_ge_minorization: gap.gap >= mb,
                minorization_ge_linear: mb >= lb,
                numeric_ge_linear: gap.gap >= lb,
            })
        })
        .collect()
}

/// Product chain: `P((i, a), (j, b)) = P1_ij P2_ab`.
pub fn tensor_product(k1: &FiniteKernel, k2: &FiniteKernel) -> Result<FiniteKernel> {
    let size = k1.n() * k2.n();
    if size > MAX_STATES {
        return Err(Error::TooLarge { size, limit: MAX_STATES });
    }
    let p = k1.p.kronecker(&k2.p);
    let pi = k1.pi.kronecker(&k2.pi);
    FiniteKernel::new(p, pi)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinorizationReport {
    pub eps: f64,
    pub n_grid: usize,
    pub steps: usize,
    /// Minimum over cell pairs of the `steps`-step transition density.
    pub min_density: f64,
    pub max_row_sum_error: f64,
    /// The constant the small-set argument relies on.
    pub claimed: f64,
}

impl MinorizationReport {
    pub fn meets_claim(&self) -> bool {
        self.min_density >= self.claimed
    }
}

/// Minimal `n`-step density of the discretized reflected uniform walk,
/// `n = steps` or `ceil(4 / eps)` by default.
pub fn minorization_probe(eps: f64, n_grid: usize, steps: Option<usize>) -> Result<MinorizationReport> {
    let kernel = discretize_reflected_walk(eps, StepKind::Uniform, n_grid)?;
    let steps = steps.unwrap_or((4.0 / eps).ceil() as usize);
    let raw = {
        let mut acc = DMatrix::identity(n_grid, n_grid);
        for _ in 0..steps {
            acc = &acc * kernel.matrix();
        }
        acc
    };
    let max_row_sum_error = raw.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max);
    let h = 2.0 / n_grid as f64;
    let min_density = raw.iter().copied().fold(f64::INFINITY, f64::min) / h;
    Ok(MinorizationReport {
        eps,
        n_grid,
        steps,
        min_density,
        max_row_sum_error,
        claimed: 0.1,
    })
}

/// `(L_min / L_max)^4 gap_prop^2 / 8` with the computable likelihood bounds.
pub fn corollary43_bound(bounds: &LikelihoodBounds, proposal_gap: f64) -> f64 {
    (corollary43_log_bound(bounds, proposal_gap)).exp()
}

/// Natural log of [`corollary43_bound`], finite even when the bound underflows.
pub fn corollary43_log_bound(bounds: &LikelihoodBounds, proposal_gap: f64) -> f64 {
    4.0 * bounds.log_ratio() + 2.0 * proposal_gap.ln() - 8f64.ln()
}

/// Seeded generator of random reversible instances.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceGenerator {
    pub seed: u64,
    pub min_n: usize,
    pub max_n: usize,
    /// Symmetric Dirichlet concentration of the stationary weights.
    pub concentration: f64,
    pub edge_prob: f64,
    /// Likelihood values are log-uniform on `[1, l_ratio]`.
    pub l_ratio: f64,
}

impl InstanceGenerator {
    pub fn new(seed: u64, max_n: usize) -> Self {
        Self { seed, min_n: 2, max_n, concentration: 1.0, edge_prob: 0.5, l_ratio: 10.0 }
    }

    /// Instance `index`; independent of every other index.
    pub fn instance(&self, index: usize) -> Instance {
        let mut rng = rng::stream(self.seed, index as u64);
        let n = rng.random_range(self.min_n..=self.max_n);
        let gamma = Gamma::new(self.concentration, 1.0).expect("positive concentration");
        let raw: Vec<f64> = (0..n).map(|_| gamma.sample(&mut rng).max(1e-300)).collect();
        let total: f64 = raw.iter().sum();
        let pi: Vec<f64> = raw.iter().map(|w| w / total).collect();

        let mut adjacency = vec![vec![false; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let e = rng.random_bool(self.edge_prob);
                adjacency[i][j] = e;
                adjacency[j][i] = e;
            }
        }
        // a random spanning path keeps every instance irreducible
        let mut order: Vec<usize> = (0..n).collect();
        for a in (1..n).rev() {
            order.swap(a, rng.random_range(0..=a));
        }
        for w in order.windows(2) {
            adjacency[w[0]][w[1]] = true;
            adjacency[w[1]][w[0]] = true;
        }
        // Metropolized uniform-neighbour walk: pi-reversible by construction
        let base = 1.0 / n as f64;
        let mut p = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut off = 0.0;
            for j in 0..n {
                if adjacency[i][j] {
                    let v = base * (pi[j] / pi[i]).min(1.0);
                    p[(i, j)] = v;
                    off += v;
                }
            }
            p[(i, i)] = 1.0 - off;
        }
        let log_ratio = self.l_ratio.ln();
        let l_values = (0..n).map(|_| (rng.random::<f64>() * log_ratio).exp()).collect();
        let q = FiniteKernel::new(p, DVector::from_vec(pi)).expect("generator builds stochastic matrices");
        Instance { index, seed: self.seed, q, l_values }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub index: usize,
    pub seed: u64,
    pub q: FiniteKernel,
    pub l_values: Vec<f64>,
}

impl Instance {
    /// Plain-text dump that reproduces the instance.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# generator_seed={} index={} n={}", self.seed, self.index, self.q.n());
        let join = |v: &mut dyn Iterator<Item = f64>| v.map(|x| format!("{x:.17e}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "pi {}", join(&mut self.q.pi.iter().copied()));
        let _ = writeln!(s, "L {}", join(&mut self.l_values.iter().copied()));
        for row in self.q.p.row_iter() {
            let _ = writeln!(s, "Q {}", join(&mut row.iter().copied()));
        }
        s
    }
}

/// Evaluates `f` on instances `0..count` in parallel, returning results in
/// index order.
pub fn run_suite<T, F>(generator: &InstanceGenerator, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&Instance) -> T + Sync,
{
    (0..count)
        .into_par_iter()
        .map(|i| f(&generator.instance(i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn two_state(p: f64) -> FiniteKernel {
        FiniteKernel::uniform(DMatrix::from_row_slice(2, 2, &[1.0 - p, p, p, 1.0 - p])).unwrap()
    }

    /// Conductance from the definition, one subset at a time.
    fn conductance_brute(k: &FiniteKernel) -> f64 {
        let n = k.n();
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << n) {
            let mass: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| k.pi[i]).sum();
            if mass > 0.5 + 1e-12 {
                continue;
            }
            let mut flow = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if mask >> i & 1 == 1 && mask >> j & 1 == 0 {
                        flow += k.pi[i] * k.p[(i, j)];
                    }
                }
            }
            best = best.min(flow / mass);
        }
        best
    }

    #[test]
    fn kernel_validation() {
        assert!(FiniteKernel::uniform(DMatrix::from_row_slice(2, 2, &[0.5, 0.6, 0.5, 0.5])).is_err());
        assert!(FiniteKernel::uniform(DMatrix::from_row_slice(2, 2, &[1.1, -0.1, 0.5, 0.5])).is_err());
        assert!(FiniteKernel::new(DMatrix::identity(2, 2), DVector::from_vec(vec![0.7, 0.7])).is_err());
        let k = FiniteKernel::new(
            DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]),
            DVector::from_vec(vec![0.5, 0.5]),
        )
        .unwrap();
        assert!(matches!(spectral_gap(&k), Err(Error::NotReversible { .. })));
        assert!(k.assert_reversible(1e-10).is_err());
    }

    #[test]
    fn gap_examples() {
        let pi = DVector::from_vec(vec![0.2, 0.3, 0.5]);
        let r = spectral_gap(&FiniteKernel::rank_one(pi).unwrap()).unwrap();
        assert!((r.gap - 1.0).abs() < 1e-12);
        for p in [0.05, 0.2, 0.5] {
            let r = spectral_gap(&two_state(p)).unwrap();
            assert!((r.gap - 2.0 * p).abs() < 1e-12);
            assert!((r.lambda2_gap - 2.0 * p).abs() < 1e-12);
        }
        // p > 1/2: eigenvalue 1 - 2p is negative
        let r = spectral_gap(&two_state(0.8)).unwrap();
        assert!((r.gap - (1.0 - 0.6)).abs() < 1e-12);
        assert!((r.lambda2_gap - 1.6).abs() < 1e-12);
        assert_eq!(spectral_gap(&FiniteKernel::identity(4).unwrap()).unwrap().gap, 0.0);
    }

    #[test]
    fn conductance_examples() {
        for p in [0.1, 0.3, 0.5] {
            assert!((conductance_exact(&two_state(p)).unwrap() - p).abs() < 1e-14);
        }
        let pi = DVector::from_vec(vec![0.1, 0.2, 0.3, 0.15, 0.25]);
        let k = FiniteKernel::rank_one(pi.clone()).unwrap();
        let c = conductance_exact(&k).unwrap();
        // flow out of A is pi(A) pi(A^c), so the ratio is pi(A^c)
        let mut expected = f64::INFINITY;
        for mask in 1u32..32 {
            let m: f64 = (0..5).filter(|i| mask >> i & 1 == 1).map(|i| pi[i]).sum();
            if m <= 0.5 + 1e-12 {
                expected = expected.min(1.0 - m);
            }
        }
        assert!((c - expected).abs() < 1e-12 && (0.5 - 1e-12..=1.0).contains(&c));
        let mut blocks = DMatrix::zeros(4, 4);
        blocks.view_mut((0, 0), (2, 2)).fill(0.5);
        blocks.view_mut((2, 2), (2, 2)).fill(0.5);
        assert_eq!(conductance_exact(&FiniteKernel::uniform(blocks).unwrap()).unwrap(), 0.0);
        assert!(conductance_exact(&FiniteKernel::identity(23).unwrap()).is_err());
    }

    #[test]
    fn gray_code_matches_brute_force() {
        let generator = InstanceGenerator::new(5, 12);
        for i in 0..200 {
            let inst = generator.instance(i);
            let a = conductance_exact(&inst.q).unwrap();
            let b = conductance_brute(&inst.q);
            assert!((a - b).abs() < 1e-12, "instance {i}: {a} vs {b}");
        }
    }

    #[test]
    fn cheeger_examples() {
        let r = cheeger_check(&two_state(0.3)).unwrap();
        assert!(r.holds(1e-10));
        assert!(r.upper_slack.abs() < 1e-12);
        let r = cheeger_check(&FiniteKernel::identity(3).unwrap()).unwrap();
        assert_eq!(r.conductance, 0.0);
        assert!(r.lambda2_gap.abs() < 1e-12 && r.holds(1e-10));
    }

    #[test]
    fn mh_finite_properties() {
        let generator = InstanceGenerator::new(9, 12);
        for i in 0..300 {
            let inst = generator.instance(i);
            let p = mh_finite(&inst.q, &inst.l_values).unwrap();
            assert!(p.reversibility_residual() < 1e-12);
            for a in 0..inst.q.n() {
                for b in 0..inst.q.n() {
                    if a != b && inst.q.p[(a, b)] > 0.0 {
                        let alpha = p.p[(a, b)] / inst.q.p[(a, b)];
                        let expected = (inst.l_values[b] / inst.l_values[a]).min(1.0);
                        assert!((alpha - expected).abs() < 1e-12);
                    }
                }
            }
            let flat = mh_finite(&inst.q, &vec![3.0; inst.q.n()]).unwrap();
            assert!((flat.p.clone() - inst.q.p.clone()).abs().max() <= 1e-14);
        }
        let inst = generator.instance(0);
        assert!(mh_finite(&inst.q, &vec![0.0; inst.q.n()]).is_err());
    }

    #[test]
    fn theorem31_constant_likelihood() {
        let inst = InstanceGenerator::new(3, 8).instance(1);
        let r = theorem31_check(&inst.q, &vec![2.0; inst.q.n()]).unwrap();
        assert!(r.lower_holds && r.upper_holds);
        assert!((r.mh_gap - r.proposal_gap).abs() < 1e-12);
        let c = remark34_probe(&inst.q, &vec![2.0; inst.q.n()]).unwrap();
        assert!((c.lower - c.upper).abs() < 1e-15 && c.lower_holds && c.upper_holds);
    }

    #[test]
    fn independence_proposal_bound() {
        let mut rng = crate::rng::ChainRng::seed_from_u64(2);
        for _ in 0..50 {
            let n = rng.random_range(2..10);
            let pi = DVector::from_element(n, 1.0 / n as f64);
            let l: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..10.0)).collect();
            let r = theorem31_check(&FiniteKernel::rank_one(pi).unwrap(), &l).unwrap();
            assert!((r.proposal_gap - 1.0).abs() < 1e-12);
            let ratio = r.l_min / r.l_max;
            assert!(r.mh_gap >= ratio.powi(4) / 8.0);
        }
    }

    #[test]
    fn gap_is_label_invariant() {
        let generator = InstanceGenerator::new(4, 12);
        let mut rng = crate::rng::ChainRng::seed_from_u64(1);
        for i in 0..50 {
            let k = generator.instance(i).q;
            let mut perm: Vec<usize> = (0..k.n()).collect();
            for a in (1..perm.len()).rev() {
                perm.swap(a, rng.random_range(0..=a));
            }
            let g1 = spectral_gap(&k).unwrap();
            let g2 = spectral_gap(&k.permuted(&perm).unwrap()).unwrap();
            assert!((g1.gap - g2.gap).abs() < 1e-10 && (g1.lambda2_gap - g2.lambda2_gap).abs() < 1e-10);
        }
    }

    #[test]
    fn discretized_walks_are_stochastic_and_reversible() {
        for (eps, step) in [(0.3, StepKind::Uniform), (0.9, StepKind::Uniform), (0.4, StepKind::Gaussian), (3.0, StepKind::Gaussian)] {
            let k = discretize_reflected_walk(eps, step, 101).unwrap();
            for row in k.matrix().row_iter() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
            }
            assert!(k.reversibility_residual() < 1e-10);
        }
        assert!(discretize_reflected_walk(1.0, StepKind::Uniform, 100).is_err());
        assert!(discretize_reflected_walk(0.5, StepKind::Uniform, 10).is_err());
    }

    /// Cell-to-cell masses from integrating the closed-form density by the
    /// midpoint rule on a fine sub-grid.
    #[test]
    fn uniform_discretization_matches_density() {
        let (eps, n) = (0.45, 64);
        let k = discretize_reflected_walk(eps, StepKind::Uniform, n).unwrap();
        let h = 2.0 / n as f64;
        let sub = 64;
        for &(i, j) in &[(0, 0), (0, 5), (3, 10), (30, 33), (63, 63), (62, 58)] {
            let mut mass = 0.0;
            for a in 0..sub {
                for b in 0..sub {
                    let x = -1.0 + i as f64 * h + (a as f64 + 0.5) * h / sub as f64;
                    let y = -1.0 + j as f64 * h + (b as f64 + 0.5) * h / sub as f64;
                    mass += crate::samplers::rurwm_density(x, y, eps).unwrap();
                }
            }
            mass *= (h / sub as f64).powi(2) / h;
            assert!((mass - k.matrix()[(i, j)]).abs() < 2e-3 * k.matrix()[(i, j)].max(1e-3), "({i},{j})");
        }
    }

    #[test]
    fn gaussian_tail_needs_more_wraps() {
        // a very wide Gaussian step approaches the uniform kernel
        let k = discretize_reflected_walk(50.0, StepKind::Gaussian, 64).unwrap();
        let g = spectral_gap(&k).unwrap();
        assert!(g.gap > 0.999, "{}", g.gap);
    }

    #[test]
    fn fourier_oracle_value() {
        let g = reflected_uniform_fourier_gap(0.5);
        assert!((g - 0.0997).abs() < 1e-4);
        // small-eps expansion (pi eps / 2)^2 / 6
        let e = 0.01;
        let t = std::f64::consts::PI * e / 2.0;
        assert!((reflected_uniform_fourier_gap(e) - t * t / 6.0).abs() < 1e-9);
    }

    #[test]
    fn discretized_gap_converges_to_fourier_gap() {
        for eps in [0.3, 0.5, 0.8] {
            let g = spectral_gap(&discretize_reflected_walk(eps, StepKind::Uniform, 400).unwrap()).unwrap();
            let oracle = reflected_uniform_fourier_gap(eps);
            assert!((g.gap - oracle).abs() < 0.02 * oracle, "eps {eps}: {} vs {oracle}", g.gap);
        }
    }

    #[test]
    fn bound_formulas() {
        assert!((minorization_gap_bound(0.5) - 0.0275).abs() < 1e-4);
        assert!((linear_gap_bound(0.5) - 0.08).abs() < 1e-15);
        let rows = theorem42_table(&[0.5], 200).unwrap();
        assert!(!rows[0].minorization_ge_linear);
    }

    #[test]
    fn tensor_examples() {
        let id = FiniteKernel::identity(3).unwrap();
        let t = tensor_product(&id, &two_state(0.3)).unwrap();
        assert!(spectral_gap(&t).unwrap().gap.abs() < 1e-12);
        let r1 = FiniteKernel::rank_one(DVector::from_vec(vec![0.4, 0.6])).unwrap();
        let r2 = FiniteKernel::rank_one(DVector::from_vec(vec![0.1, 0.2, 0.7])).unwrap();
        assert!((spectral_gap(&tensor_product(&r1, &r2).unwrap()).unwrap().gap - 1.0).abs() < 1e-12);
        let big = FiniteKernel::identity(80).unwrap();
        assert!(tensor_product(&big, &big).is_err());
    }

    #[test]
    fn powers_stay_stochastic() {
        let r = minorization_probe(0.5, 128, None).unwrap();
        assert_eq!(r.steps, 8);
        assert!(r.max_row_sum_error < 1e-10);
        let longer = minorization_probe(0.5, 128, Some(16)).unwrap();
        assert!(longer.min_density >= r.min_density);
        let k = discretize_reflected_walk(0.5, StepKind::Uniform, 64).unwrap();
        let p3 = k.power(3).unwrap();
        let direct = k.matrix() * k.matrix() * k.matrix();
        assert!((p3.matrix() - direct).abs().max() < 1e-13);
    }

    #[test]
    fn instance_dump_is_stable() {
        let g = InstanceGenerator::new(1, 4);
        assert_eq!(g.instance(3), g.instance(3));
        let d = g.instance(3).dump();
        assert!(d.starts_with("# generator_seed=1 index=3"));
        assert_eq!(d.lines().filter(|l| l.starts_with("Q ")).count(), g.instance(3).q.n());
    }
}
