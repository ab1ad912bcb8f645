//! Chain-quality estimators and the spectral-gap error bounds.

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::posterior::LogLikelihood;
use crate::spectral::FiniteKernel;

/// Sample autocorrelation at lags `0..=max_lag`.
#[derive(Clone, Debug, PartialEq)]
pub struct AcfSeries {
    pub rho: Vec<f64>,
    pub n: usize,
}

/// Centred sum of squares and autocovariance sums `sum_t c_t c_{t+k}` for
/// every lag, through a zero-padded FFT.
fn autocovariance_sums(series: &[f64]) -> Result<Vec<f64>> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = series.iter().map(|x| x - mean).collect();
    if centred.iter().all(|c| *c == 0.0) {
        return Err(Error::ZeroVariance);
    }
    if n <= 256 {
        return Ok((0..n)
            .map(|k| (0..n - k).map(|t| centred[t] * centred[t + k]).sum())
            .collect());
    }
    let size = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);
    let mut buf: Vec<Complex64> = centred
        .iter()
        .map(|&c| Complex64::new(c, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(size)
        .collect();
    forward.process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex64::new(z.norm_sqr(), 0.0);
    }
    inverse.process(&mut buf);
    Ok(buf[..n].iter().map(|z| z.re / size as f64).collect())
}

/// Biased estimator with a single mean and denominator, so `rho[0] = 1` and
/// `|rho[k]| <= 1`.
pub fn acf(series: &[f64], max_lag: usize) -> Result<AcfSeries> {
    if series.len() < 4 * max_lag.max(1) {
        return Err(Error::InvalidParameter(format!(
            "series of length {} is too short for max_lag {max_lag}",
            series.len()
        )));
    }
    let sums = autocovariance_sums(series)?;
    let c0 = sums[0];
    let mut rho: Vec<f64> = sums[..=max_lag].iter().map(|c| c / c0).collect();
    rho[0] = 1.0;
    Ok(AcfSeries { rho, n: series.len() })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IatEstimate {
    /// Integrated autocorrelation time.
    pub tau: f64,
    /// `n / tau`.
    pub ess: f64,
    /// Number of lags summed.
    pub lags: usize,
}

/// `tau = 1 + 2 sum_k rho[k]`, truncated by Geyer's initial positive
/// sequence: pair sums `rho[2m] + rho[2m+1]` are added while positive.
pub fn iat(series: &[f64]) -> Result<IatEstimate> {
    let n = series.len();
    if n < 4 {
        return Err(Error::InvalidParameter("series needs at least 4 values".into()));
    }
    let sums = autocovariance_sums(series)?;
    let c0 = sums[0];
    let max_lag = n / 4;
    let mut total = 0.0;
    let mut lags = 0;
    let mut m = 0;
    while 2 * m + 1 <= max_lag {
        let pair = (sums[2 * m] + sums[2 * m + 1]) / c0;
        if pair <= 0.0 {
            break;
        }
        total += pair;
        lags = 2 * m + 1;
        m += 1;
    }
    let tau = (2.0 * total - 1.0).max(f64::MIN_POSITIVE);
    Ok(IatEstimate { tau, ess: n as f64 / tau, lags })
}

/// Upper bound `2 Var(f) / gap` on the CLT variance of a reversible chain.
pub fn kv_variance_bound(f_variance: f64, gap: f64) -> Result<f64> {
    if !(gap > 0.0) {
        return Err(Error::InvalidParameter(format!("gap must be positive, got {gap}")));
    }
    if f_variance < 0.0 {
        return Err(Error::InvalidParameter(format!("variance must be non-negative, got {f_variance}")));
    }
    Ok(2.0 * f_variance / gap)
}

/// Mean-square error bound `2 / (n gap) + 2 / (n gap)^2` for functions with
/// `||f||_2 <= 1`, valid after the burn-in of [`burnin_steps`].
pub fn rudolf_mse_bound(n: usize, gap: f64) -> Result<f64> {
    if n == 0 || !(gap > 0.0) {
        return Err(Error::InvalidParameter(format!("need n >= 1 and gap > 0, got n = {n}, gap = {gap}")));
    }
    let t = n as f64 * gap;
    Ok(2.0 / t + 2.0 / (t * t))
}

/// Smallest burn-in satisfying the moment-`p` condition, with `nu_norm` the
/// `L^{p/(p-2)}` norm of `d nu / d mu - 1` for the initial law `nu`.
/// `p = f64::INFINITY` is accepted.
pub fn burnin_steps(p: f64, gap: f64, nu_norm: f64) -> Result<u64> {
    if !(p > 2.0) {
        return Err(Error::InvalidParameter(format!("p must exceed 2, got {p}")));
    }
    if !(gap > 0.0 && gap < 1.0) {
        return Err(Error::InvalidParameter(format!("gap must lie in (0, 1), got {gap}")));
    }
    if !(nu_norm >= 0.0) {
        return Err(Error::InvalidParameter(format!("nu_norm must be non-negative, got {nu_norm}")));
    }
    let factor = if p < 4.0 {
        p / (2.0 * (p - 2.0)) * (32.0 * p / (p - 2.0)).ln()
    } else {
        64f64.ln()
    };
    let beta = 1.0 - gap;
    let steps = factor * nu_norm / (1.0 / beta).ln();
    // absorb rounding in quotients that are integers in exact arithmetic
    Ok((steps - 1e-9).ceil().max(0.0) as u64)
}

/// `<(1 + P)(1 - P)^{-1} f0, f0>_pi` with `f0 = f - pi(f)`, solved through the
/// fundamental matrix `(I - P + 1 pi^T)^{-1}`.
pub fn asymptotic_variance(kernel: &FiniteKernel, f: &[f64]) -> Result<f64> {
    let n = kernel.n();
    if f.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: f.len() });
    }
    let pi = kernel.weights();
    let mean: f64 = f.iter().zip(pi.iter()).map(|(a, w)| a * w).sum();
    let centred = DVector::from_iterator(n, f.iter().map(|v| v - mean));
    let a = DMatrix::identity(n, n) - kernel.matrix() + DMatrix::from_fn(n, n, |_, j| pi[j]);
    let g = a
        .lu()
        .solve(&centred)
        .ok_or_else(|| Error::InvalidParameter("chain is not ergodic".into()))?;
    let pg = kernel.matrix() * &g;
    Ok((0..n).map(|i| pi[i] * centred[i] * (g[i] + pg[i])).sum())
}

/// Normalized posterior density of a one-coefficient problem on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureDensity {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

pub const QUADRATURE_POINTS: usize = 2001;

/// Evaluates `exp(log L(u_0))` on 2001 equispaced points of `[-1, 1]` and
/// normalizes with the trapezoidal rule.
pub fn posterior_quadrature_oracle<T: LogLikelihood + ?Sized>(target: &T, dim: usize) -> Result<QuadratureDensity> {
    if dim != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: dim });
    }
    let m = QUADRATURE_POINTS;
    let h = 2.0 / (m - 1) as f64;
    let grid: Vec<f64> = (0..m).map(|i| (-1.0 + i as f64 * h).min(1.0)).collect();
    let logs = grid
        .iter()
        .map(|&u| target.log_likelihood(&[u]))
        .collect::<Result<Vec<f64>>>()?;
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let z = trapezoid(&raw, h);
    Ok(QuadratureDensity {
        density: raw.iter().map(|v| v / z).collect(),
        grid,
    })
}

fn trapezoid(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    h * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1]))
}

impl QuadratureDensity {
    pub fn integral(&self) -> f64 {
        trapezoid(&self.density, self.grid[1] - self.grid[0])
    }

    /// Probability of each of `bins` equal bins of `[-1, 1]` under the
    /// piecewise-linear interpolant of the density.
    pub fn bin_probabilities(&self, bins: usize) -> Vec<f64> {
        let h = self.grid[1] - self.grid[0];
        let width = 2.0 / bins as f64;
        let mut probs = vec![0.0; bins];
        for (w, pair) in self.density.windows(2).enumerate() {
            let lo = self.grid[w];
            let mid = lo + 0.5 * h;
            let b = (((mid + 1.0) / width).floor() as usize).min(bins - 1);
            let edge = -1.0 + (b + 1) as f64 * width;
            if lo + h <= edge + 1e-12 || b + 1 == bins {
                probs[b] += 0.5 * h * (pair[0] + pair[1]);
            } else {
                // interval straddles a bin edge
                let t = (edge - lo) / h;
                let at_edge = pair[0] + t * (pair[1] - pair[0]);
                probs[b] += 0.5 * (edge - lo) * (pair[0] + at_edge);
                probs[b + 1] += 0.5 * (lo + h - edge) * (at_edge + pair[1]);
            }
        }
        probs
    }
}

/// Normalized histogram of `samples` over `bins` equal bins of `[-1, 1]`.
pub fn histogram(samples: &[f64], bins: usize) -> Vec<f64> {
    let mut counts = vec![0.0; bins];
    for &s in samples {
        let b = (((s + 1.0) / 2.0 * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        counts[b] += 1.0;
    }
    let n = samples.len() as f64;
    counts.iter().map(|c| c / n).collect()
}

/// `(1/2) sum |p - q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
