//! Metropolis-within-Gibbs samplers for the four model families.

mod chain;
mod ess;
mod output;
mod sampler;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

pub use chain::{run_chain, BlockAcceptance, Chain, ChainConfig, DrawSummary};
pub use ess::{ess, EssEstimate};
pub use output::{config_hash, read_block_csv, BlockTable, ChainManifest};
pub use sampler::{DeltaProposal, Proposals, Sampler};

use crate::basis::PrecisionKernel;
use crate::error::{PicarError, Result};
use crate::link::{cutoffs_from_alpha, exp_clamped, ordinal_log_prob, softplus};
use crate::randfield::Family;

/// Gamma prior in shape-rate form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    /// Shape 0.5, rate 2000.
    pub const DIFFUSE: GammaPrior = GammaPrior {
        shape: 0.5,
        rate: 2000.0,
    };
}

#[derive(Clone, Debug, PartialEq)]
pub struct Priors {
    pub beta_mean: Vec<f64>,
    pub beta_cov: DMatrix<f64>,
    /// Precision of the spatial effect (of `delta_w` for svc).
    pub tau: GammaPrior,
    /// Precision of the spatially varying slope (svc only).
    pub tau_beta: GammaPrior,
}

impl Priors {
    /// `beta ~ N(0, variance * I)` and the diffuse precision priors.
    pub fn isotropic(k: usize, variance: f64) -> Self {
        Priors {
            beta_mean: vec![0.0; k],
            beta_cov: DMatrix::identity(k, k) * variance,
            tau: GammaPrior::DIFFUSE,
            tau_beta: GammaPrior::DIFFUSE,
        }
    }
}

/// Everything fixed during sampling.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub family: Family,
    /// `n x k` covariates.
    pub x: DMatrix<f64>,
    /// `n x p` projected basis.
    pub am: DMatrix<f64>,
    pub kernel: PrecisionKernel,
    pub priors: Priors,
    /// Output names of the coefficients, `beta1..betak` unless relabelled.
    pub beta_names: Vec<String>,
    beta_precision: DMatrix<f64>,
}

impl ModelSpec {
    pub fn new(
        family: Family,
        x: DMatrix<f64>,
        am: DMatrix<f64>,
        kernel: PrecisionKernel,
        priors: Priors,
    ) -> Result<Self> {
        let (n, k) = x.shape();
        if am.nrows() != n {
            return Err(PicarError::DimensionMismatch(format!(
                "design has {n} rows, projected basis has {}",
                am.nrows()
            )));
        }
        if am.ncols() != kernel.dim() {
            return Err(PicarError::DimensionMismatch(format!(
                "basis rank {} but kernel dimension {}",
                am.ncols(),
                kernel.dim()
            )));
        }
        if priors.beta_mean.len() != k || priors.beta_cov.shape() != (k, k) {
            return Err(PicarError::DimensionMismatch(format!(
                "beta prior must have dimension {k}"
            )));
        }
        if family == Family::Svc && k == 0 {
            return Err(PicarError::InvalidArgument(
                "spatially varying slope needs at least one covariate".into(),
            ));
        }
        if let Family::Ordinal { categories } = family {
            if categories < 2 {
                return Err(PicarError::InvalidArgument("ordinal model needs J >= 2".into()));
            }
        }
        for g in [priors.tau, priors.tau_beta] {
            if !(g.shape > 0.0 && g.rate > 0.0) {
                return Err(PicarError::InvalidArgument(format!(
                    "gamma prior needs positive shape and rate, got {g:?}"
                )));
            }
        }
        let beta_precision = Cholesky::new(priors.beta_cov.clone())
            .ok_or_else(|| PicarError::InvalidArgument("beta prior covariance is not SPD".into()))?
            .inverse();
        Ok(ModelSpec {
            family,
            x,
            am,
            kernel,
            priors,
            beta_names: (1..=k).map(|j| format!("beta{j}")).collect(),
            beta_precision,
        })
    }

    /// Replaces the coefficient names; the count must match the design.
    pub fn with_beta_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.k() {
            return Err(PicarError::DimensionMismatch(format!(
                "{} coefficient names for {} columns",
                names.len(),
                self.k()
            )));
        }
        self.beta_names = names;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn rank(&self) -> usize {
        self.am.ncols()
    }

    /// Number of free cutoff parameters (ordinal only).
    pub fn num_alpha(&self) -> usize {
        match self.family {
            Family::Ordinal { categories } => categories - 2,
            _ => 0,
        }
    }

    pub fn log_prior_beta(&self, beta: &[f64]) -> f64 {
        let d = DVector::from_iterator(
            beta.len(),
            beta.iter().zip(&self.priors.beta_mean).map(|(b, m)| b - m),
        );
        -0.5 * d.dot(&(&self.beta_precision * &d))
    }
}

/// Current values of every sampled parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub beta: Vec<f64>,
    /// Basis coefficients of the spatial effect.
    pub delta: Vec<f64>,
    pub tau: f64,
    /// Basis coefficients of the spatially varying slope (svc).
    pub delta_beta: Vec<f64>,
    pub tau_beta: f64,
    /// Free cutoff parameters `alpha_2..alpha_{J-1}` (ordinal).
    pub alpha: Vec<f64>,
}

impl ChainState {
    /// Zero coefficients, unit precisions, cutoffs at `0, 1, 2, ...`.
    pub fn zeros(spec: &ModelSpec) -> Self {
        ChainState {
            beta: vec![0.0; spec.k()],
            delta: vec![0.0; spec.rank()],
            tau: 1.0,
            delta_beta: if spec.family == Family::Svc { vec![0.0; spec.rank()] } else { Vec::new() },
            tau_beta: 1.0,
            alpha: vec![0.0; spec.num_alpha()],
        }
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        let svc_rank = if spec.family == Family::Svc { spec.rank() } else { 0 };
        if self.beta.len() != spec.k()
            || self.delta.len() != spec.rank()
            || self.delta_beta.len() != svc_rank
            || self.alpha.len() != spec.num_alpha()
        {
            return Err(PicarError::DimensionMismatch("chain state does not match model".into()));
        }
        if !(self.tau > 0.0 && self.tau_beta > 0.0) {
            return Err(PicarError::InvalidArgument("precisions must be positive".into()));
        }
        if self.alpha.iter().any(|a| !a.is_finite()) {
            return Err(PicarError::InvalidArgument("cutoff parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn cutoffs(&self) -> Vec<f64> {
        cutoffs_from_alpha(&self.alpha)
    }
}

/// Log-likelihood contribution of one site.
#[inline]
pub(crate) fn site_loglik(family: Family, z: f64, eta: f64, theta: &[f64]) -> f64 {
    match family {
        Family::Binary => z * eta - softplus(eta),
        // The log z! term is constant in the parameters and omitted.
        Family::Count | Family::Svc => z * eta - exp_clamped(eta),
        Family::Ordinal { .. } => ordinal_log_prob(z as usize, theta, eta),
    }
}

/// Sums site contributions in index order; fails on the first non-finite one.
pub(crate) fn sum_loglik(
    family: Family,
    z: &[f64],
    eta: impl Iterator<Item = f64>,
    theta: &[f64],
) -> Result<f64> {
    let mut total = 0.0;
    for (index, (&zi, e)) in z.iter().zip(eta).enumerate() {
        let v = site_loglik(family, zi, e, theta);
        if !v.is_finite() {
            return Err(PicarError::NonFiniteLoglik { index });
        }
        total += v;
    }
    Ok(total)
}

/// Linear predictor `X beta + AM delta (+ X_1 * AM delta_beta)`.
pub fn linear_predictor(spec: &ModelSpec, state: &ChainState) -> Vec<f64> {
    let xb = &spec.x * DVector::from_column_slice(&state.beta);
    let amd = &spec.am * DVector::from_column_slice(&state.delta);
    let mut eta: Vec<f64> = xb.iter().zip(amd.iter()).map(|(a, b)| a + b).collect();
    if spec.family == Family::Svc {
        let amdb = &spec.am * DVector::from_column_slice(&state.delta_beta);
        for (i, e) in eta.iter_mut().enumerate() {
            *e += spec.x[(i, 0)] * amdb[i];
        }
    }
    eta
}

/// Data log-likelihood at `state`.
pub fn loglik(spec: &ModelSpec, state: &ChainState, z: &[f64]) -> Result<f64> {
    if z.len() != spec.n() {
        return Err(PicarError::DimensionMismatch(format!(
            "{} responses for {} sites",
            z.len(),
            spec.n()
        )));
    }
    let eta = linear_predictor(spec, state);
    sum_loglik(spec.family, z, eta.into_iter(), &state.cutoffs())
}

/// Draws `tau | delta ~ Gamma(shape + p/2, rate + delta' K delta / 2)`.
pub fn gibbs_tau(delta: &[f64], kernel: &PrecisionKernel, prior: GammaPrior, rng: &mut impl Rng) -> f64 {
    let quad = kernel.quad_form(delta);
    let shape = prior.shape + delta.len() as f64 / 2.0;
    let rate = prior.rate + 0.5 * quad;
    Gamma::new(shape, 1.0 / rate)
        .expect("positive gamma parameters")
        .sample(rng)
}

/// Metropolis acceptance for a log target ratio.
pub fn metropolis_accept(log_ratio: f64, rng: &mut impl Rng) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}
