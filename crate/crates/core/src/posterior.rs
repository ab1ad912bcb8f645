//! Gaussian-noise likelihood, synthetic data, and explicit likelihood bounds.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::field::{field_min_bound, sample_prior, BasisSpec, CoefficientVector};
use crate::forward::ForwardModel;
use crate::rng::ChainRng;

/// Observations `y = G(u_true) + sigma * xi`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub locations: Vec<f64>,
    pub sigma: f64,
    pub d: f64,
    pub truth_seed: u64,
    pub truth: Option<CoefficientVector>,
}

impl Dataset {
    /// Dataset with explicit values; `truth` is unknown.
    pub fn new(y: Vec<f64>, locations: Vec<f64>, sigma: f64, d: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        if y.len() != locations.len() {
            return Err(Error::DimensionMismatch {
                expected: locations.len(),
                found: y.len(),
            });
        }
        Ok(Self {
            y,
            locations,
            sigma,
            d,
            truth_seed: 0,
            truth: None,
        })
    }
}

/// `L_upper = 1` and the computable lower bound on the likelihood, both
/// held as logarithms since the lower bound underflows for realistic data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LikelihoodBounds {
    pub log_lower: f64,
    pub log_upper: f64,
}

impl LikelihoodBounds {
    pub fn lower(&self) -> f64 {
        self.log_lower.exp()
    }

    pub fn upper(&self) -> f64 {
        self.log_upper.exp()
    }

    /// `L_lower / L_upper`.
    pub fn ratio(&self) -> f64 {
        self.log_ratio().exp()
    }

    pub fn log_ratio(&self) -> f64 {
        self.log_lower - self.log_upper
    }
}

/// Draws the truth from the prior and adds Gaussian noise, all from one
/// stream seeded with `seed`.
pub fn make_synthetic_data(model: &ForwardModel, sigma: f64, seed: u64) -> Result<Dataset> {
    let mut rng = ChainRng::seed_from_u64(seed);
    let truth = sample_prior(&mut rng, model.spec().dim());
    let mut data = make_synthetic_data_with_truth(&mut rng, model, &truth, sigma)?;
    data.truth_seed = seed;
    Ok(data)
}

/// Noisy observations of a given truth.
pub fn make_synthetic_data_with_truth<R: Rng + ?Sized>(
    rng: &mut R,
    model: &ForwardModel,
    truth: &CoefficientVector,
    sigma: f64,
) -> Result<Dataset> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma must be non-negative, got {sigma}")));
    }
    let clean = model.apply(truth.as_slice())?;
    let y = clean
        .iter()
        .map(|v| {
            let xi: f64 = rng.sample(StandardNormal);
            v + sigma * xi
        })
        .collect();
    Ok(Dataset {
        y,
        locations: model.observation().locations().to_vec(),
        sigma,
        d: model.observation().spacing(),
        truth_seed: 0,
        truth: Some(truth.clone()),
    })
}

/// `-(1 / (2 sigma^2)) ||y - g||^2`.
pub fn misfit_log_likelihood(y: &[f64], predicted: &[f64], sigma: f64) -> f64 {
    let ss: f64 = y.iter().zip(predicted).map(|(a, b)| (a - b) * (a - b)).sum();
    -ss / (2.0 * sigma * sigma)
}

/// Log-density of the target with respect to the uniform prior, up to a
/// constant.
pub trait LogLikelihood: Sync {
    fn log_likelihood(&self, u: &[f64]) -> Result<f64>;
}

/// `L = 1`: the target is the prior itself.
#[derive(Clone, Copy, Debug, Default)]
pub struct FlatLikelihood;

impl LogLikelihood for FlatLikelihood {
    fn log_likelihood(&self, _u: &[f64]) -> Result<f64> {
        Ok(0.0)
    }
}

/// Posterior of the elliptic inverse problem.
#[derive(Clone, Debug)]
pub struct Posterior {
    model: ForwardModel,
    data: Dataset,
}

impl Posterior {
    pub fn new(model: ForwardModel, data: Dataset) -> Result<Self> {
        if data.y.len() != model.observation().len() {
            return Err(Error::DimensionMismatch {
                expected: model.observation().len(),
                found: data.y.len(),
            });
        }
        Ok(Self { model, data })
    }

    pub fn model(&self) -> &ForwardModel {
        &self.model
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn bounds(&self) -> Result<LikelihoodBounds> {
        likelihood_lower_bound(&self.data, self.model.spec(), self.model.source_cumulative_sup())
    }
}

impl LogLikelihood for Posterior {
    fn log_likelihood(&self, u: &[f64]) -> Result<f64> {
        let predicted = self.model.apply(u)?;
        Ok(misfit_log_likelihood(&self.data.y, &predicted, self.data.sigma))
    }
}

/// `log L(u)` for a validated coefficient vector.
pub fn log_likelihood(posterior: &Posterior, u: &CoefficientVector) -> Result<f64> {
    posterior.log_likelihood(u.as_slice())
}

/// Uses `|p(x)| <= 2 sup|G| / a_min` with `G = int_0^x g` and `a_min` the
/// analytic field bound, so every residual is at most `|y_i| + 2 sup|G| / a_min`.
pub fn likelihood_lower_bound(
    data: &Dataset,
    spec: &BasisSpec,
    source_cumulative_sup: f64,
) -> Result<LikelihoodBounds> {
    let a_min = field_min_bound(spec);
    if a_min <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "field lower bound must be positive, got {a_min}"
        )));
    }
    let p_sup = 2.0 * source_cumulative_sup / a_min;
    let worst: Vec<f64> = data.y.iter().map(|y| y.abs() + p_sup).collect();
    let zeros = vec![0.0; worst.len()];
    Ok(LikelihoodBounds {
        log_lower: misfit_log_likelihood(&worst, &zeros, data.sigma),
        log_upper: 0.0,
    })
}
