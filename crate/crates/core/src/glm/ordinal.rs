//! Proportional-odds model `logit P(z <= j) = theta_j - x'beta` with
//! `theta_1 = 0` and the remaining cutoffs parameterized by log increments.

use nalgebra::{DMatrix, DVector};

use super::{factor_information, relative_change, GlmFit, GRADIENT_TOL, MAX_ITERATIONS};
use crate::error::{PicarError, Result};
use crate::link::{cutoffs_from_alpha, logistic, ordinal_log_prob, softplus};

fn log_density(x: f64) -> f64 {
    -softplus(-x) - softplus(x)
}

/// Per-site derivatives of `log P(z = c)` with respect to the upper and
/// lower cutoff arguments `a = theta_c - eta`, `b = theta_{c-1} - eta`.
struct SiteTerms {
    log_p: f64,
    da: f64,
    db: f64,
    daa: f64,
    dbb: f64,
    dab: f64,
}

fn site_terms(c: usize, theta: &[f64], eta: f64) -> SiteTerms {
    let j_max = theta.len() + 1;
    let log_p = ordinal_log_prob(c, theta, eta);
    let mut t = SiteTerms {
        log_p,
        da: 0.0,
        db: 0.0,
        daa: 0.0,
        dbb: 0.0,
        dab: 0.0,
    };
    if c < j_max {
        let a = theta[c - 1] - eta;
        let ra = (log_density(a) - log_p).exp();
        t.da = ra;
        t.daa = ra * (1.0 - 2.0 * logistic(a)) - ra * ra;
    }
    if c > 1 {
        let b = theta[c - 2] - eta;
        let rb = (log_density(b) - log_p).exp();
        t.db = -rb;
        t.dbb = -rb * (1.0 - 2.0 * logistic(b)) - rb * rb;
    }
    t.dab = -t.da * t.db;
    t
}

fn split(params: &[f64], n_alpha: usize) -> (&[f64], &[f64]) {
    params.split_at(n_alpha)
}

/// Log-likelihood at `(alpha, beta)`; categories in `z` are `1..=J`.
pub fn cumlogit_loglik(x: &DMatrix<f64>, z: &[f64], categories: usize, params: &[f64]) -> f64 {
    let (alpha, beta) = split(params, categories - 2);
    let theta = cutoffs_from_alpha(alpha);
    let beta = DVector::from_column_slice(beta);
    let eta = x * beta;
    z.iter()
        .zip(eta.iter())
        .map(|(&c, &e)| ordinal_log_prob(c as usize, &theta, e))
        .sum()
}

/// Gradient and Hessian of the log-likelihood in `(alpha, beta)`.
fn derivatives(
    x: &DMatrix<f64>,
    z: &[f64],
    categories: usize,
    params: &[f64],
) -> (f64, DVector<f64>, DMatrix<f64>) {
    let n_alpha = categories - 2;
    let k = x.ncols();
    let (alpha, beta) = split(params, n_alpha);
    let theta = cutoffs_from_alpha(alpha);
    let eta = x * DVector::from_column_slice(beta);
    // Work in (theta_2..theta_{J-1}, beta) first, then apply the chain rule.
    let dim = n_alpha + k;
    let mut ll = 0.0;
    let mut g = DVector::zeros(dim);
    let mut h = DMatrix::zeros(dim, dim);
    for i in 0..z.len() {
        let c = z[i] as usize;
        let t = site_terms(c, &theta, eta[i]);
        ll += t.log_p;
        // Index of theta_c and theta_{c-1} among the free cutoffs, if free.
        let free = |j: usize| (j >= 2 && j <= categories - 1).then(|| j - 2);
        let ia = if c < categories { free(c) } else { None };
        let ib = if c > 1 { free(c - 1) } else { None };
        let deta = -(t.da + t.db);
        let deta2 = t.daa + t.dbb + 2.0 * t.dab;
        if let Some(ia) = ia {
            g[ia] += t.da;
            h[(ia, ia)] += t.daa;
        }
        if let Some(ib) = ib {
            g[ib] += t.db;
            h[(ib, ib)] += t.dbb;
        }
        if let (Some(ia), Some(ib)) = (ia, ib) {
            h[(ia, ib)] += t.dab;
            h[(ib, ia)] += t.dab;
        }
        // Cross terms between a cutoff and eta: d/d eta of d/da is -(daa + dab).
        let row = x.row(i);
        if let Some(ia) = ia {
            let v = -(t.daa + t.dab);
            for j in 0..k {
                h[(ia, n_alpha + j)] += v * row[j];
                h[(n_alpha + j, ia)] += v * row[j];
            }
        }
        if let Some(ib) = ib {
            let v = -(t.dbb + t.dab);
            for j in 0..k {
                h[(ib, n_alpha + j)] += v * row[j];
                h[(n_alpha + j, ib)] += v * row[j];
            }
        }
        for j in 0..k {
            g[n_alpha + j] += deta * row[j];
            for l in 0..=j {
                let v = deta2 * row[j] * row[l];
                h[(n_alpha + j, n_alpha + l)] += v;
                if l != j {
                    h[(n_alpha + l, n_alpha + j)] += v;
                }
            }
        }
    }
    // Chain rule: theta_j = sum_{i <= j} exp(alpha_i) over free indices.
    let mut jac = DMatrix::<f64>::identity(dim, dim);
    for r in 0..n_alpha {
        for c in 0..=r {
            jac[(r, c)] = alpha[c].exp();
        }
    }
    let g_theta = g.rows(0, n_alpha).into_owned();
    let g_alpha = jac.tr_mul(&g);
    let mut h_alpha = jac.tr_mul(&h) * &jac;
    for i in 0..n_alpha {
        let tail: f64 = g_theta.rows(i, n_alpha - i).sum();
        h_alpha[(i, i)] += alpha[i].exp() * tail;
    }
    (ll, g_alpha, h_alpha)
}

/// Analytic gradient of [`cumlogit_loglik`].
pub fn cumlogit_gradient(x: &DMatrix<f64>, z: &[f64], categories: usize, params: &[f64]) -> Vec<f64> {
    derivatives(x, z, categories, params).1.as_slice().to_vec()
}

fn check_categories(z: &[f64], categories: usize) -> Result<()> {
    if categories < 2 {
        return Err(PicarError::InvalidArgument(format!("need at least 2 categories, got {categories}")));
    }
    if let Some(bad) = z.iter().find(|&&c| c.fract() != 0.0 || c < 1.0 || c > categories as f64) {
        return Err(PicarError::InvalidArgument(format!(
            "category {bad} outside 1..={categories}"
        )));
    }
    let mut counts = vec![0usize; categories];
    for &c in z {
        counts[c as usize - 1] += 1;
    }
    let missing: Vec<usize> = (1..=categories).filter(|&j| counts[j - 1] == 0).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(PicarError::EmptyCategories(missing))
    }
}

/// Newton's method on `(alpha, beta)` with step halving and Levenberg
/// damping when the Hessian is not negative definite.
pub fn cumlogit_fit(x: &DMatrix<f64>, z: &[f64], categories: usize) -> Result<GlmFit> {
    check_categories(z, categories)?;
    let n_alpha = categories - 2;
    let dim = n_alpha + x.ncols();
    // Start the cutoffs from marginal cumulative proportions.
    let n = z.len() as f64;
    let mut cum = 0.0;
    let mut logits = Vec::new();
    for j in 1..categories {
        cum += z.iter().filter(|&&c| c as usize == j).count() as f64 / n;
        logits.push((cum / (1.0 - cum)).ln());
    }
    let mut params = vec![0.0; dim];
    for i in 0..n_alpha {
        params[i] = (logits[i + 1] - logits[i]).max(1e-3).ln();
    }

    let (mut ll, mut g, mut h) = derivatives(x, z, categories, &params);
    let mut deviance_path = vec![-2.0 * ll];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        if g.amax() <= GRADIENT_TOL {
            converged = true;
            break;
        }
        let info = -&h;
        let mut damping = 0.0;
        let step = loop {
            let damped = &info + DMatrix::<f64>::identity(dim, dim) * damping;
            if let Some(chol) = nalgebra::Cholesky::new(damped) {
                break Some(chol.solve(&g));
            }
            damping = if damping == 0.0 { 1e-6 * info.diagonal().amax().max(1.0) } else { damping * 10.0 };
            if damping > 1e12 {
                break None;
            }
        };
        let Some(step) = step else { break };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, s)| p + t * s).collect();
            let trial_ll = cumlogit_loglik(x, z, categories, &trial);
            if trial_ll.is_finite() && trial_ll >= ll - 1e-12 * ll.abs() {
                let change = relative_change(-2.0 * ll, -2.0 * trial_ll);
                params = trial;
                let d = derivatives(x, z, categories, &params);
                ll = d.0;
                deviance_path.push(-2.0 * ll);
                g = d.1;
                h = d.2;
                moved = true;
                if change == 0.0 && g.amax() > GRADIENT_TOL && t < 1e-6 {
                    moved = false;
                }
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    converged |= g.amax() <= GRADIENT_TOL;
    let covariance = factor_information(&(-&h))
        .map(|c| c.inverse())
        .unwrap_or_else(|| DMatrix::from_element(dim, dim, f64::NAN));
    Ok(GlmFit {
        converged: converged && params.iter().all(|v| v.is_finite()),
        coefficients: params,
        covariance,
        iterations,
        deviance: -2.0 * ll,
        deviance_path,
        gradient_norm: g.amax(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::{irls_fit, Link};
    use crate::link::ordinal_probs;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn simulate(n: usize, beta: &[f64], theta: &[f64], seed: u64) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, beta.len(), |_, _| rng.random_range(-1.0..1.0));
        let z = (0..n)
            .map(|i| {
                let eta: f64 = (0..beta.len()).map(|j| x[(i, j)] * beta[j]).sum();
                let probs = ordinal_probs(theta, eta);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (j, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return (j + 1) as f64;
                    }
                }
                probs.len() as f64
            })
            .collect();
        (x, z)
    }

    #[test]
    fn two_categories_collapse_to_logit() {
        let (x, z) = simulate(400, &[1.0, -0.5], &[0.0], 2);
        let ord = cumlogit_fit(&x, &z, 2).unwrap();
        let success: Vec<f64> = z.iter().map(|&c| if c == 2.0 { 1.0 } else { 0.0 }).collect();
        let logit = irls_fit(Link::Logit, &x, &success);
        for (a, b) in ord.coefficients.iter().zip(&logit.coefficients) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn converges_with_small_gradient() {
        let (x, z) = simulate(800, &[1.0, 1.0], &[0.0, 1.0, 2.0], 5);
        let fit = cumlogit_fit(&x, &z, 4).unwrap();
        assert!(fit.converged);
        assert!(fit.gradient_norm <= GRADIENT_TOL);
        let theta = cutoffs_from_alpha(&fit.coefficients[..2]);
        assert!(theta.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, z) = simulate(200, &[0.8, -0.4], &[0.0, 0.7, 1.9], 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let params: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = cumlogit_gradient(&x, &z, 4, &params);
            for j in 0..4 {
                let h = 1e-5;
                let mut up = params.clone();
                let mut dn = params.clone();
                up[j] += h;
                dn[j] -= h;
                let fd = (cumlogit_loglik(&x, &z, 4, &up) - cumlogit_loglik(&x, &z, 4, &dn)) / (2.0 * h);
                assert!((g[j] - fd).abs() <= 1e-4 * fd.abs().max(1.0), "{} vs {fd}", g[j]);
            }
        }
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let (x, z) = simulate(150, &[0.5, 0.2], &[0.0, 1.0, 2.0], 9);
        let params = [0.1, -0.2, 0.4, 0.3];
        let (_, _, h) = derivatives(&x, &z, 4, &params);
        for j in 0..4 {
            let step = 1e-5;
            let mut up = params.to_vec();
            let mut dn = params.to_vec();
            up[j] += step;
            dn[j] -= step;
            let gu = cumlogit_gradient(&x, &z, 4, &up);
            let gd = cumlogit_gradient(&x, &z, 4, &dn);
            for i in 0..4 {
                let fd = (gu[i] - gd[i]) / (2.0 * step);
                assert!((h[(i, j)] - fd).abs() <= 1e-4 * fd.abs().max(1.0));
            }
        }
    }

    #[test]
    fn empty_category_is_reported() {
        let x = DMatrix::from_element(4, 1, 0.5);
        let err = cumlogit_fit(&x, &[1.0, 1.0, 3.0, 3.0], 4).unwrap_err();
        assert_eq!(err, PicarError::EmptyCategories(vec![2, 4]));
    }
}
