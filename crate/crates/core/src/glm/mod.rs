//! Maximum-likelihood GLMs used to screen the basis rank and to seed the
//! sampler's proposals.

mod ordinal;
mod rank;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use ordinal::{cumlogit_fit, cumlogit_gradient, cumlogit_loglik};
pub use rank::{augmented_design, default_rank_grid, full_rank_grid, glm_fit, select_rank, RankSelection};

use crate::link::{exp_clamped, logistic, softplus};

pub const MAX_ITERATIONS: usize = 100;
pub const DEVIANCE_TOL: f64 = 1e-8;
pub const GRADIENT_TOL: f64 = 1e-6;
pub const RIDGE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Logit,
    Log,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlmFit {
    /// For cumulative-logit fits: free cutoff increments first, then slopes.
    pub coefficients: Vec<f64>,
    /// Inverse observed information at the optimum.
    pub covariance: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub deviance: f64,
    /// Deviance at the start and after every accepted step.
    pub deviance_path: Vec<f64>,
    pub gradient_norm: f64,
}

impl GlmFit {
    pub fn linear_predictor(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let offset = self.coefficients.len() - x.ncols();
        let beta = DVector::from_column_slice(&self.coefficients[offset..]);
        (x * beta).as_slice().to_vec()
    }
}

fn loglik(link: Link, eta: &[f64], z: &[f64]) -> f64 {
    eta.iter()
        .zip(z)
        .map(|(&e, &y)| match link {
            Link::Logit => y * e - softplus(e),
            Link::Log => y * e - exp_clamped(e),
        })
        .sum()
}

fn mean_and_weight(link: Link, eta: f64) -> (f64, f64) {
    match link {
        Link::Logit => {
            let mu = logistic(eta);
            (mu, mu * (1.0 - mu))
        }
        Link::Log => {
            let mu = exp_clamped(eta);
            (mu, mu)
        }
    }
}

/// `X' diag(w) X`.
pub(crate) fn weighted_gram(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut xw = x.clone();
    for (i, wi) in w.iter().enumerate() {
        let s = wi.max(0.0).sqrt();
        xw.row_mut(i).scale_mut(s);
    }
    xw.tr_mul(&xw)
}

/// Cholesky of a negative-definite Hessian's negation, retrying with a small
/// ridge when it is numerically singular.
pub(crate) fn factor_information(info: &DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    Cholesky::new(info.clone()).or_else(|| {
        let p = info.nrows();
        Cholesky::new(info + DMatrix::<f64>::identity(p, p) * RIDGE)
    })
}

pub(crate) fn relative_change(old: f64, new: f64) -> f64 {
    (old - new).abs() / (new.abs() + 0.1)
}

/// Newton-Raphson (equivalently IRLS for canonical links) with step halving.
pub fn irls_fit(link: Link, x: &DMatrix<f64>, z: &[f64]) -> GlmFit {
    let (n, k) = x.shape();
    assert_eq!(n, z.len(), "design/response length mismatch");
    let mut beta = DVector::<f64>::zeros(k);
    if link == Link::Log && k > 0 {
        // Start near the marginal mean so early steps are modest.
        let mean = z.iter().sum::<f64>() / n.max(1) as f64;
        if x.column(0).iter().all(|&v| v == 1.0) {
            beta[0] = mean.max(1e-3).ln();
        }
    }
    let mut eta: Vec<f64> = (x * &beta).as_slice().to_vec();
    let mut dev = -2.0 * loglik(link, &eta, z);
    let mut deviance_path = vec![dev];
    let mut converged = false;
    let mut iterations = 0;
    let mut grad_norm = f64::INFINITY;
    let mut info = DMatrix::zeros(k, k);

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (mu, w): (Vec<f64>, Vec<f64>) = eta.iter().map(|&e| mean_and_weight(link, e)).unzip();
        let resid = DVector::from_iterator(n, z.iter().zip(&mu).map(|(y, m)| y - m));
        let grad = x.tr_mul(&resid);
        grad_norm = grad.amax();
        info = weighted_gram(x, &w);
        let Some(chol) = factor_information(&info) else {
            break;
        };
        let step = chol.solve(&grad);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = &beta + &step * t;
            let trial_eta: Vec<f64> = (x * &trial).as_slice().to_vec();
            let trial_dev = -2.0 * loglik(link, &trial_eta, z);
            if trial_dev.is_finite() && trial_dev <= dev + 1e-12 * dev.abs() {
                let change = relative_change(dev, trial_dev);
                beta = trial;
                eta = trial_eta;
                dev = trial_dev;
                deviance_path.push(dev);
                accepted = true;
                if change <= DEVIANCE_TOL {
                    let (mu, _): (Vec<f64>, Vec<f64>) =
                        eta.iter().map(|&e| mean_and_weight(link, e)).unzip();
                    let resid = DVector::from_iterator(n, z.iter().zip(&mu).map(|(y, m)| y - m));
                    grad_norm = x.tr_mul(&resid).amax();
                    converged = grad_norm <= GRADIENT_TOL;
                }
                break;
            }
            t *= 0.5;
        }
        if converged || !accepted {
            break;
        }
    }
    let (_, w): (Vec<f64>, Vec<f64>) = eta.iter().map(|&e| mean_and_weight(link, e)).unzip();
    if k > 0 {
        info = weighted_gram(x, &w);
    }
    let covariance = factor_information(&info)
        .map(|c| c.inverse())
        .unwrap_or_else(|| DMatrix::from_element(k, k, f64::NAN));
    let finite = beta.iter().all(|b| b.is_finite()) && covariance.iter().all(|v| v.is_finite());
    GlmFit {
        coefficients: beta.as_slice().to_vec(),
        covariance,
        converged: converged && finite,
        iterations,
        deviance: dev,
        deviance_path,
        gradient_norm: grad_norm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn intercept_only_logit() {
        let x = DMatrix::from_element(8, 1, 1.0);
        let z = [1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        let fit = irls_fit(Link::Logit, &x, &z);
        assert!(fit.converged);
        assert!((fit.coefficients[0] - 3f64.ln()).abs() < 1e-10);
        assert!(fit.gradient_norm <= GRADIENT_TOL);
    }

    #[test]
    fn intercept_only_poisson() {
        let x = DMatrix::from_element(5, 1, 1.0);
        let z = [0.0, 3.0, 2.0, 7.0, 1.0];
        let fit = irls_fit(Link::Log, &x, &z);
        assert!(fit.converged);
        assert!((fit.coefficients[0] - 2.6f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn separation_flags_non_convergence() {
        let x = DMatrix::from_column_slice(4, 1, &[-2.0, -1.0, 1.0, 2.0]);
        let fit = irls_fit(Link::Logit, &x, &[0.0, 0.0, 1.0, 1.0]);
        assert!(!fit.converged || fit.coefficients[0] > 10.0);
    }

    #[test]
    fn logit_recovers_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 5000;
        let x = DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { rng.random_range(-1.0..1.0) });
        let truth = [0.3, 1.0, -0.7];
        let z: Vec<f64> = (0..n)
            .map(|i| {
                let eta: f64 = (0..3).map(|j| x[(i, j)] * truth[j]).sum();
                f64::from(u8::from(rng.random::<f64>() < logistic(eta)))
            })
            .collect();
        let fit = irls_fit(Link::Logit, &x, &z);
        assert!(fit.converged);
        for j in 0..3 {
            let se = fit.covariance[(j, j)].sqrt();
            assert!((fit.coefficients[j] - truth[j]).abs() < 3.0 * se);
        }
        let cov = &fit.covariance;
        assert!((cov - cov.transpose()).amax() < 1e-12);
    }
}
