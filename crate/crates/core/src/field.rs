//! Uniform-series prior and the diffusion coefficient it induces.
//!
//! The coefficient field is
//!
//! ```text
//! a(u)(x) = abar + gamma_0 u_0 + sum_{j=1..K} ( gamma_{2j-1} u_{2j-1} cos(2 pi j x)
//!                                            + gamma_{2j}   u_{2j}   sin(2 pi j x) )
//! ```
//!
//! with `u` ranging over the cube `[-1, 1]^J`, `J = 2K + 1`, and default weights
//! `gamma_0 = 1`, `gamma_{2j-1} = gamma_{2j} = j^-2`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Default constant mean level of the diffusion coefficient.
pub const DEFAULT_ABAR: f64 = 4.38;

/// Basis and weights of the series prior.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisSpec {
    k: usize,
    abar: f64,
    gamma: Vec<f64>,
}

impl BasisSpec {
    /// Default weights for `k` frequency pairs and mean level `abar`.
    pub fn new(k: usize, abar: f64) -> Result<Self> {
        let mut gamma = Vec::with_capacity(2 * k + 1);
        gamma.push(1.0);
        for j in 1..=k {
            let w = 1.0 / (j * j) as f64;
            gamma.push(w);
            gamma.push(w);
        }
        Self::with_gamma(k, abar, gamma)
    }

    /// Default basis with `abar = 4.38`.
    pub fn with_k(k: usize) -> Self {
        Self::new(k, DEFAULT_ABAR).expect("default weights are valid")
    }

    pub fn with_gamma(k: usize, abar: f64, gamma: Vec<f64>) -> Result<Self> {
        if gamma.len() != 2 * k + 1 {
            return Err(Error::DimensionMismatch {
                expected: 2 * k + 1,
                found: gamma.len(),
            });
        }
        if !abar.is_finite() {
            return Err(Error::InvalidParameter(format!("abar must be finite, got {abar}")));
        }
        if let Some(g) = gamma.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "weights must be positive and finite, got {g}"
            )));
        }
        Ok(Self { k, abar, gamma })
    }

    /// Number of frequency pairs.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of coefficients, `2K + 1`.
    pub fn dim(&self) -> usize {
        2 * self.k + 1
    }

    pub fn abar(&self) -> f64 {
        self.abar
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    fn check_dim(&self, u: &CoefficientVector) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: u.len(),
            });
        }
        Ok(())
    }
}

/// A point of the cube `[-1, 1]^J`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientVector(Vec<f64>);

impl CoefficientVector {
    /// Validates that every entry lies in `[-1, 1]`. Out-of-range input is an
    /// error; nothing is clamped.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(-1.0..=1.0).contains(*v))
        {
            return Err(Error::OutOfCube { index, value });
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for CoefficientVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// `a(u)(x)` at a single point.
pub fn evaluate_field(spec: &BasisSpec, u: &CoefficientVector, x: f64) -> Result<f64> {
    spec.check_dim(u)?;
    Ok(field_at(spec, u.as_slice(), x))
}

fn field_at(spec: &BasisSpec, u: &[f64], x: f64) -> f64 {
    let g = &spec.gamma;
    let mut value = spec.abar + g[0] * u[0];
    for j in 1..=spec.k {
        let (s, c) = (2.0 * PI * j as f64 * x).sin_cos();
        value += g[2 * j - 1] * u[2 * j - 1] * c + g[2 * j] * u[2 * j] * s;
    }
    value
}

/// `a(u)` at each of `nodes`, by direct summation.
pub fn evaluate_field_on_mesh(
    spec: &BasisSpec,
    u: &CoefficientVector,
    nodes: &[f64],
) -> Result<Vec<f64>> {
    spec.check_dim(u)?;
    Ok(nodes.iter().map(|&x| field_at(spec, u.as_slice(), x)).collect())
}

/// Analytic lower bound on `a(u)(x)` over all `x` and all admissible `u`.
///
/// Each frequency pair contributes at most `sqrt(g_c^2 + g_s^2)` in absolute
/// value, which is `sqrt(2) j^-2` for the default weights.
pub fn field_min_bound(spec: &BasisSpec) -> f64 {
    let g = &spec.gamma;
    let pairs: f64 = (1..=spec.k)
        .map(|j| g[2 * j - 1].hypot(g[2 * j]))
        .sum();
    spec.abar - g[0] - pairs
}

/// Independent draw from the uniform product prior on `[-1, 1]^dim`.
pub fn sample_prior<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CoefficientVector {
    CoefficientVector((0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
}

/// Fast evaluation of `a(u)` on the uniform nodes `x_i = i / n`, `i = 0..=n`.
///
/// On these nodes the trigonometric sum is a discrete Fourier transform of
/// length `n`; frequencies `j >= n` alias exactly onto `j mod n`.
#[derive(Clone)]
pub struct UniformFieldEvaluator {
    spec: BasisSpec,
    n_cells: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for UniformFieldEvaluator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UniformFieldEvaluator")
            .field("spec", &self.spec)
            .field("n_cells", &self.n_cells)
            .finish()
    }
}

impl UniformFieldEvaluator {
    pub fn new(spec: BasisSpec, n_cells: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_inverse(n_cells);
        Self { spec, n_cells, fft }
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    /// Writes `a(u)(i / n)` for `i = 0..=n` into `out`.
    pub fn evaluate_into(&self, u: &[f64], out: &mut Vec<f64>) -> Result<()> {
        let dim = self.spec.dim();
        if u.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: u.len(),
            });
        }
        let n = self.n_cells;
        let g = &self.spec.gamma;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for j in 1..=self.spec.k {
            buf[j % n] += Complex64::new(g[2 * j - 1] * u[2 * j - 1], -g[2 * j] * u[2 * j]);
        }
        self.fft.process(&mut buf);
        let base = self.spec.abar + g[0] * u[0];
        out.clear();
        out.extend(buf.iter().map(|z| base + z.re));
        out.push(base + buf[0].re);
        Ok(())
    }
}
