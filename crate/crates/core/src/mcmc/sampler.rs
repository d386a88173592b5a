use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{gibbs_tau, metropolis_accept, sum_loglik, ChainState, ModelSpec};
use crate::error::{PicarError, Result};
use crate::glm::GlmFit;
use crate::link::cutoffs_from_alpha;
use crate::randfield::Family;

/// Smallest variance allowed on a proposal covariance diagonal.
pub const PROPOSAL_VARIANCE_FLOOR: f64 = 1e-12;

/// Shape of the random-walk proposal for basis coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaProposal {
    /// `delta + s u`, `u ~ N(0, I)`.
    Isotropic,
    /// `delta + s L u` with `L L'` the GLM's asymptotic covariance block.
    GlmCovariance,
}

/// Random-walk proposal factors and step scales for every block.
#[derive(Clone, Debug, PartialEq)]
pub struct Proposals {
    pub beta_factor: DMatrix<f64>,
    pub beta_scale: f64,
    pub delta_factor: DMatrix<f64>,
    pub delta_scale: f64,
    pub delta_beta_factor: DMatrix<f64>,
    pub delta_beta_scale: f64,
    pub alpha_scales: Vec<f64>,
}

/// Lower Cholesky factor of a covariance block with floored diagonal; falls
/// back to the diagonal when the block is not positive definite.
pub fn proposal_factor(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = cov.clone();
    for i in 0..c.nrows() {
        if !(c[(i, i)] >= PROPOSAL_VARIANCE_FLOOR) {
            c[(i, i)] = PROPOSAL_VARIANCE_FLOOR;
        }
    }
    if c.iter().all(|v| v.is_finite()) {
        if let Some(ch) = Cholesky::new(c.clone()) {
            return ch.unpack();
        }
    }
    DMatrix::from_diagonal(&DVector::from_iterator(
        c.nrows(),
        (0..c.nrows()).map(|i| if c[(i, i)].is_finite() { c[(i, i)].sqrt() } else { 1.0 }),
    ))
}

fn block(cov: &DMatrix<f64>, start: usize, len: usize) -> DMatrix<f64> {
    cov.view((start, start), (len, len)).into_owned()
}

fn optimal_scale(dim: usize) -> f64 {
    2.38 / (dim.max(1) as f64).sqrt()
}

impl Proposals {
    /// Unit-covariance proposals with the given starting scales.
    /// Zero-sized placeholders for chains rebuilt from files.
    pub fn empty() -> Self {
        Proposals {
            beta_factor: DMatrix::zeros(0, 0),
            beta_scale: 0.0,
            delta_factor: DMatrix::zeros(0, 0),
            delta_scale: 0.0,
            delta_beta_factor: DMatrix::zeros(0, 0),
            delta_beta_scale: 0.0,
            alpha_scales: Vec::new(),
        }
    }

    pub fn isotropic(spec: &ModelSpec, beta_scale: f64, delta_scale: f64) -> Self {
        let p = spec.rank();
        Proposals {
            beta_factor: DMatrix::identity(spec.k(), spec.k()),
            beta_scale,
            delta_factor: DMatrix::identity(p, p),
            delta_scale,
            delta_beta_factor: DMatrix::identity(p, p),
            delta_beta_scale: delta_scale,
            alpha_scales: vec![0.1; spec.num_alpha()],
        }
    }

    /// Proposal shapes from the augmented GLM's asymptotic covariance, laid
    /// out as `[alpha, beta, delta, delta_beta]`.
    pub fn from_glm(spec: &ModelSpec, fit: &GlmFit, delta: DeltaProposal) -> Result<Self> {
        let (k, p, na) = (spec.k(), spec.rank(), spec.num_alpha());
        let svc_p = if spec.family == Family::Svc { p } else { 0 };
        let expected = na + k + p + svc_p;
        if fit.covariance.nrows() != expected {
            return Err(PicarError::DimensionMismatch(format!(
                "GLM covariance has dimension {}, model needs {expected}",
                fit.covariance.nrows()
            )));
        }
        let cov = &fit.covariance;
        // Isotropic steps start at the average GLM standard error.
        let shape = |start: usize, len: usize| match delta {
            DeltaProposal::GlmCovariance => (proposal_factor(&block(cov, start, len)), optimal_scale(len)),
            DeltaProposal::Isotropic => {
                let s: f64 = (start..start + len).map(|i| cov[(i, i)].max(0.0).sqrt()).sum();
                let sd = if len == 0 || !s.is_finite() { 0.1 } else { s / len as f64 };
                (DMatrix::identity(len, len), optimal_scale(len) * sd)
            }
        };
        let (delta_factor, delta_scale) = shape(na + k, p);
        let (delta_beta_factor, delta_beta_scale) = shape(na + k + p, svc_p);
        Ok(Proposals {
            beta_factor: proposal_factor(&block(cov, na, k)),
            beta_scale: optimal_scale(k),
            delta_factor,
            delta_scale,
            delta_beta_factor,
            delta_beta_scale,
            alpha_scales: (0..na).map(|i| 2.4 * cov[(i, i)].max(PROPOSAL_VARIANCE_FLOOR).sqrt()).collect(),
        })
    }
}

impl ChainState {
    /// Starts at the GLM estimate (same layout as [`Proposals::from_glm`]).
    pub fn from_glm(spec: &ModelSpec, fit: &GlmFit) -> Self {
        let (k, p, na) = (spec.k(), spec.rank(), spec.num_alpha());
        let c = &fit.coefficients;
        ChainState {
            alpha: c[..na].to_vec(),
            beta: c[na..na + k].to_vec(),
            delta: c[na + k..na + k + p].to_vec(),
            delta_beta: if spec.family == Family::Svc { c[na + k + p..na + k + 2 * p].to_vec() } else { Vec::new() },
            tau: 1.0,
            tau_beta: 1.0,
        }
    }
}

/// One chain's state with cached predictor pieces.
pub struct Sampler<'a> {
    spec: &'a ModelSpec,
    z: &'a [f64],
    state: ChainState,
    theta: Vec<f64>,
    xb: Vec<f64>,
    amd: Vec<f64>,
    amdb: Vec<f64>,
    /// Projected proposal factors `AM L`.
    am_delta_factor: DMatrix<f64>,
    am_delta_beta_factor: DMatrix<f64>,
    proposals: Proposals,
    ll: f64,
}

fn matvec(a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (a * DVector::from_column_slice(x)).as_slice().to_vec()
}

fn normals(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

impl<'a> Sampler<'a> {
    pub fn new(spec: &'a ModelSpec, z: &'a [f64], state: ChainState, proposals: Proposals) -> Result<Self> {
        state.validate(spec)?;
        if z.len() != spec.n() {
            return Err(PicarError::DimensionMismatch(format!(
                "{} responses for {} sites",
                z.len(),
                spec.n()
            )));
        }
        let p = spec.rank();
        let svc = spec.family == Family::Svc;
        if proposals.beta_factor.shape() != (spec.k(), spec.k())
            || proposals.delta_factor.shape() != (p, p)
            || (svc && proposals.delta_beta_factor.shape() != (p, p))
            || proposals.alpha_scales.len() != spec.num_alpha()
        {
            return Err(PicarError::DimensionMismatch("proposal shapes do not match model".into()));
        }
        let xb = matvec(&spec.x, &state.beta);
        let amd = matvec(&spec.am, &state.delta);
        let amdb = if svc { matvec(&spec.am, &state.delta_beta) } else { Vec::new() };
        let am_delta_factor = &spec.am * &proposals.delta_factor;
        let am_delta_beta_factor = if svc { &spec.am * &proposals.delta_beta_factor } else { DMatrix::zeros(0, 0) };
        let mut sampler = Sampler {
            spec,
            z,
            theta: cutoffs_from_alpha(&state.alpha),
            state,
            xb,
            amd,
            amdb,
            am_delta_factor,
            am_delta_beta_factor,
            proposals,
            ll: 0.0,
        };
        sampler.ll = sampler.eval(&sampler.xb, &sampler.amd, &sampler.amdb, &sampler.theta)?;
        Ok(sampler)
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn loglik(&self) -> f64 {
        self.ll
    }

    pub fn proposals(&self) -> &Proposals {
        &self.proposals
    }

    pub fn proposals_mut(&mut self) -> &mut Proposals {
        &mut self.proposals
    }

    /// Log-likelihood plus every log-prior term (up to constants).
    pub fn log_posterior(&self) -> f64 {
        let s = &self.state;
        let spec = self.spec;
        let p = spec.rank() as f64;
        let kern = &spec.kernel;
        let gamma_term = |tau: f64, g: super::GammaPrior| (g.shape - 1.0) * tau.ln() - g.rate * tau;
        let mut lp = self.ll
            + spec.log_prior_beta(&s.beta)
            + 0.5 * p * s.tau.ln()
            - 0.5 * s.tau * kern.quad_form(&s.delta)
            + gamma_term(s.tau, spec.priors.tau);
        if spec.family == Family::Svc {
            lp += 0.5 * p * s.tau_beta.ln() - 0.5 * s.tau_beta * kern.quad_form(&s.delta_beta)
                + gamma_term(s.tau_beta, spec.priors.tau_beta);
        }
        lp
    }

    fn eval(&self, xb: &[f64], amd: &[f64], amdb: &[f64], theta: &[f64]) -> Result<f64> {
        let spec = self.spec;
        if spec.family == Family::Svc {
            let eta = (0..xb.len()).map(|i| xb[i] + amd[i] + spec.x[(i, 0)] * amdb[i]);
            sum_loglik(spec.family, self.z, eta, theta)
        } else {
            let eta = xb.iter().zip(amd).map(|(a, b)| a + b);
            sum_loglik(spec.family, self.z, eta, theta)
        }
    }

    /// Proposed log-likelihood; a non-finite value rejects the proposal.
    fn eval_proposal(&self, xb: &[f64], amd: &[f64], amdb: &[f64], theta: &[f64]) -> f64 {
        self.eval(xb, amd, amdb, theta).unwrap_or(f64::NEG_INFINITY)
    }

    /// Random-walk update of the fixed effects.
    pub fn mh_beta(&mut self, rng: &mut impl Rng) -> bool {
        let k = self.spec.k();
        if k == 0 {
            return false;
        }
        let u = DVector::from_vec(normals(k, rng));
        let step = &self.proposals.beta_factor * u * self.proposals.beta_scale;
        let prop: Vec<f64> = self.state.beta.iter().zip(step.iter()).map(|(b, s)| b + s).collect();
        let xb = matvec(&self.spec.x, &prop);
        let ll = self.eval_proposal(&xb, &self.amd, &self.amdb, &self.theta);
        let ratio = ll - self.ll + self.spec.log_prior_beta(&prop) - self.spec.log_prior_beta(&self.state.beta);
        if metropolis_accept(ratio, rng) {
            self.state.beta = prop;
            self.xb = xb;
            self.ll = ll;
            true
        } else {
            false
        }
    }

    fn delta_step(&self, slope: bool, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
        let p = self.spec.rank();
        let u = DVector::from_vec(normals(p, rng));
        let (factor, am_factor, scale, current, cached) = if slope {
            (&self.proposals.delta_beta_factor, &self.am_delta_beta_factor, self.proposals.delta_beta_scale, &self.state.delta_beta, &self.amdb)
        } else {
            (&self.proposals.delta_factor, &self.am_delta_factor, self.proposals.delta_scale, &self.state.delta, &self.amd)
        };
        let step = factor * &u;
        let am_step = am_factor * &u;
        let prop = current.iter().zip(step.iter()).map(|(d, s)| d + scale * s).collect();
        let am_prop = cached.iter().zip(am_step.iter()).map(|(d, s)| d + scale * s).collect();
        (prop, am_prop)
    }

    /// All-at-once random-walk update of the spatial-effect coefficients.
    pub fn mh_delta(&mut self, rng: &mut impl Rng) -> bool {
        if self.spec.rank() == 0 {
            return false;
        }
        let (prop, amd) = self.delta_step(false, rng);
        let ll = self.eval_proposal(&self.xb, &amd, &self.amdb, &self.theta);
        let kern = &self.spec.kernel;
        let prior = -0.5 * self.state.tau * (kern.quad_form(&prop) - kern.quad_form(&self.state.delta));
        if metropolis_accept(ll - self.ll + prior, rng) {
            self.state.delta = prop;
            self.amd = amd;
            self.ll = ll;
            true
        } else {
            false
        }
    }

    /// All-at-once random-walk update of the varying-slope coefficients.
    pub fn mh_delta_beta(&mut self, rng: &mut impl Rng) -> bool {
        if self.spec.family != Family::Svc || self.spec.rank() == 0 {
            return false;
        }
        let (prop, amdb) = self.delta_step(true, rng);
        let ll = self.eval_proposal(&self.xb, &self.amd, &amdb, &self.theta);
        let kern = &self.spec.kernel;
        let prior =
            -0.5 * self.state.tau_beta * (kern.quad_form(&prop) - kern.quad_form(&self.state.delta_beta));
        if metropolis_accept(ll - self.ll + prior, rng) {
            self.state.delta_beta = prop;
            self.amdb = amdb;
            self.ll = ll;
            true
        } else {
            false
        }
    }

    /// Gibbs draws of the precision parameters.
    pub fn gibbs_taus(&mut self, rng: &mut impl Rng) {
        let spec = self.spec;
        if spec.family == Family::Svc {
            self.state.tau_beta = gibbs_tau(&self.state.delta_beta, &spec.kernel, spec.priors.tau_beta, rng);
        }
        self.state.tau = gibbs_tau(&self.state.delta, &spec.kernel, spec.priors.tau, rng);
    }

    /// Componentwise random-walk updates of the free cutoffs under a flat
    /// prior. Returns the acceptance of each component.
    pub fn mh_alpha(&mut self, rng: &mut impl Rng) -> Vec<bool> {
        let mut accepted = Vec::with_capacity(self.state.alpha.len());
        for i in 0..self.state.alpha.len() {
            let step: f64 = StandardNormal.sample(rng);
            let mut alpha = self.state.alpha.clone();
            alpha[i] += self.proposals.alpha_scales[i] * step;
            let theta = cutoffs_from_alpha(&alpha);
            let ok = theta.windows(2).all(|w| w[1] > w[0]);
            let ll = if ok { self.eval_proposal(&self.xb, &self.amd, &self.amdb, &theta) } else { f64::NEG_INFINITY };
            let acc = metropolis_accept(ll - self.ll, rng);
            if acc {
                self.state.alpha = alpha;
                self.theta = theta;
                self.ll = ll;
            }
            assert!(
                self.theta[0] == 0.0 && self.theta.windows(2).all(|w| w[1] > w[0]),
                "cutoffs lost their ordering"
            );
            accepted.push(acc);
        }
        accepted
    }

    /// Recomputes the cached pieces from scratch and returns the drift of the
    /// cached log-likelihood.
    pub fn refresh(&mut self) -> Result<f64> {
        self.xb = matvec(&self.spec.x, &self.state.beta);
        self.amd = matvec(&self.spec.am, &self.state.delta);
        if self.spec.family == Family::Svc {
            self.amdb = matvec(&self.spec.am, &self.state.delta_beta);
        }
        let fresh = self.eval(&self.xb, &self.amd, &self.amdb, &self.theta)?;
        let drift = (fresh - self.ll).abs();
        self.ll = fresh;
        Ok(drift)
    }
}
