use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ess, ChainState, EssEstimate, ModelSpec, Proposals, Sampler};
use crate::error::{PicarError, Result};
use crate::randfield::Family;

/// Target acceptance of all-at-once blocks during adaptation.
pub const BLOCK_TARGET: f64 = 0.234;
/// Target acceptance of scalar components during adaptation.
pub const SCALAR_TARGET: f64 = 0.44;
/// Iterations between full recomputations of the cached predictor.
const REFRESH_EVERY: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Robbins-Monro step-size adaptation during burn-in.
    pub adapt: bool,
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(PicarError::InvalidArgument(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(PicarError::InvalidArgument("thinning interval must be positive".into()));
        }
        Ok(())
    }

    pub fn num_draws(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Post-burn-in acceptance rates per block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockAcceptance {
    pub beta: f64,
    pub delta: f64,
    pub delta_beta: Option<f64>,
    pub alpha: Vec<f64>,
}

/// Posterior mean, standard deviation and 95% equal-tailed interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawSummary {
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

impl DrawSummary {
    pub fn of(draws: &[f64]) -> Self {
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = if draws.len() > 1 {
            draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let mut sorted = draws.to_vec();
        sorted.sort_by(f64::total_cmp);
        DrawSummary {
            mean,
            sd: var.sqrt(),
            lower: quantile(&sorted, 0.025),
            upper: quantile(&sorted, 0.975),
        }
    }

    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Linear-interpolation quantile of sorted data (the common "type 7" rule).
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Stored draws and diagnostics of one run.
#[derive(Clone, Debug)]
pub struct Chain {
    pub family: Family,
    pub config: ChainConfig,
    /// One row per stored draw.
    pub beta: DMatrix<f64>,
    pub beta_names: Vec<String>,
    pub delta: DMatrix<f64>,
    pub tau: Vec<f64>,
    pub delta_beta: DMatrix<f64>,
    pub tau_beta: Vec<f64>,
    pub alpha: DMatrix<f64>,
    pub acceptance: BlockAcceptance,
    pub final_proposals: Proposals,
    pub wall_time: f64,
}

impl Chain {
    pub fn num_draws(&self) -> usize {
        self.tau.len()
    }

    /// The stored state at draw `d`.
    pub fn state(&self, d: usize) -> ChainState {
        let row = |m: &DMatrix<f64>| m.row(d).iter().copied().collect::<Vec<_>>();
        ChainState {
            beta: row(&self.beta),
            delta: row(&self.delta),
            tau: self.tau[d],
            delta_beta: row(&self.delta_beta),
            tau_beta: self.tau_beta.get(d).copied().unwrap_or(1.0),
            alpha: row(&self.alpha),
        }
    }

    fn column(m: &DMatrix<f64>, j: usize) -> Vec<f64> {
        m.column(j).iter().copied().collect()
    }

    pub fn beta_summaries(&self) -> Vec<DrawSummary> {
        (0..self.beta.ncols()).map(|j| DrawSummary::of(&Self::column(&self.beta, j))).collect()
    }

    pub fn alpha_summaries(&self) -> Vec<DrawSummary> {
        (0..self.alpha.ncols()).map(|j| DrawSummary::of(&Self::column(&self.alpha, j))).collect()
    }

    /// Every scalar series with a stable name, in output order.
    pub fn named_series(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = Vec::new();
        let push_block = |out: &mut Vec<(String, Vec<f64>)>, prefix: &str, m: &DMatrix<f64>, offset: usize| {
            for j in 0..m.ncols() {
                out.push((format!("{prefix}{}", j + offset), Self::column(m, j)));
            }
        };
        push_block(&mut out, "alpha", &self.alpha, 2);
        for (j, name) in self.beta_names.iter().enumerate() {
            out.push((name.clone(), Self::column(&self.beta, j)));
        }
        push_block(&mut out, "delta", &self.delta, 1);
        push_block(&mut out, "delta_beta", &self.delta_beta, 1);
        out.push(("tau".into(), self.tau.clone()));
        if !self.tau_beta.is_empty() {
            out.push(("tau_beta".into(), self.tau_beta.clone()));
        }
        out
    }

    /// Effective sample size per series; `None` with fewer than 100 draws.
    pub fn ess_table(&self) -> Vec<(String, Option<EssEstimate>)> {
        self.named_series()
            .into_iter()
            .map(|(name, s)| {
                let e = ess(&s).ok();
                (name, e)
            })
            .collect()
    }

    /// Equality of everything except the measured wall time.
    pub fn same_draws(&self, other: &Chain) -> bool {
        self.family == other.family
            && self.config == other.config
            && self.beta == other.beta
            && self.delta == other.delta
            && self.tau == other.tau
            && self.delta_beta == other.delta_beta
            && self.tau_beta == other.tau_beta
            && self.alpha == other.alpha
            && self.acceptance == other.acceptance
    }
}

struct Adapter {
    enabled: bool,
}

impl Adapter {
    /// Robbins-Monro step on the log scale.
    fn update(&self, scale: &mut f64, accepted: bool, target: f64, t: usize) {
        if self.enabled {
            let gain = (t as f64 + 1.0).powf(-0.6);
            let a = if accepted { 1.0 } else { 0.0 };
            *scale = (scale.ln() + gain * (a - target)).exp().clamp(1e-8, 1e4);
        }
    }
}

#[derive(Default)]
struct Counter {
    accepted: usize,
    total: usize,
}

impl Counter {
    fn record(&mut self, accepted: bool) {
        self.accepted += usize::from(accepted);
        self.total += 1;
    }

    fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.accepted as f64 / self.total as f64
        }
    }
}

/// Runs one chain: each sweep updates beta, delta (then delta_beta for
/// svc), the precisions by Gibbs, and the ordinal cutoffs.
pub fn run_chain(
    spec: &ModelSpec,
    z: &[f64],
    init: ChainState,
    proposals: Proposals,
    config: &ChainConfig,
) -> Result<Chain> {
    config.validate()?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sampler = Sampler::new(spec, z, init, proposals)?;
    let svc = spec.family == Family::Svc;
    let (k, p, na) = (spec.k(), spec.rank(), spec.num_alpha());
    let draws = config.num_draws();
    let mut beta = Vec::with_capacity(draws * k);
    let mut delta = Vec::with_capacity(draws * p);
    let mut delta_beta = Vec::with_capacity(if svc { draws * p } else { 0 });
    let mut alpha = Vec::with_capacity(draws * na);
    let mut tau = Vec::with_capacity(draws);
    let mut tau_beta = Vec::new();
    let mut acc_beta = Counter::default();
    let mut acc_delta = Counter::default();
    let mut acc_delta_beta = Counter::default();
    let mut acc_alpha: Vec<Counter> = (0..na).map(|_| Counter::default()).collect();

    for it in 0..config.iterations {
        let burning = it < config.burn_in;
        let adapter = Adapter {
            enabled: burning && config.adapt,
        };
        let a = sampler.mh_beta(&mut rng);
        adapter.update(&mut sampler.proposals_mut().beta_scale, a, BLOCK_TARGET, it);
        let d = sampler.mh_delta(&mut rng);
        adapter.update(&mut sampler.proposals_mut().delta_scale, d, BLOCK_TARGET, it);
        let db = if svc {
            let db = sampler.mh_delta_beta(&mut rng);
            adapter.update(&mut sampler.proposals_mut().delta_beta_scale, db, BLOCK_TARGET, it);
            db
        } else {
            false
        };
        sampler.gibbs_taus(&mut rng);
        let al = sampler.mh_alpha(&mut rng);
        for (i, &acc) in al.iter().enumerate() {
            adapter.update(&mut sampler.proposals_mut().alpha_scales[i], acc, SCALAR_TARGET, it);
        }
        if (it + 1) % REFRESH_EVERY == 0 {
            sampler.refresh().map_err(|e| match e {
                PicarError::NonFiniteLoglik { index } => PicarError::ChainFailure { iteration: it, index },
                other => other,
            })?;
        }
        if burning {
            continue;
        }
        acc_beta.record(a);
        acc_delta.record(d);
        if svc {
            acc_delta_beta.record(db);
        }
        for (c, &acc) in acc_alpha.iter_mut().zip(&al) {
            c.record(acc);
        }
        if (it - config.burn_in + 1) % config.thin == 0 && tau.len() < draws {
            let s = sampler.state();
            beta.extend_from_slice(&s.beta);
            delta.extend_from_slice(&s.delta);
            delta_beta.extend_from_slice(&s.delta_beta);
            alpha.extend_from_slice(&s.alpha);
            tau.push(s.tau);
            if svc {
                tau_beta.push(s.tau_beta);
            }
        }
    }
    let stored = tau.len();
    Ok(Chain {
        family: spec.family,
        config: *config,
        beta: DMatrix::from_row_slice(stored, k, &beta),
        beta_names: spec.beta_names.clone(),
        delta: DMatrix::from_row_slice(stored, p, &delta),
        tau,
        delta_beta: DMatrix::from_row_slice(stored, if svc { p } else { 0 }, &delta_beta),
        tau_beta,
        alpha: DMatrix::from_row_slice(stored, na, &alpha),
        acceptance: BlockAcceptance {
            beta: acc_beta.rate(),
            delta: acc_delta.rate(),
            delta_beta: svc.then(|| acc_delta_beta.rate()),
            alpha: acc_alpha.iter().map(Counter::rate).collect(),
        },
        final_proposals: sampler.proposals().clone(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}
