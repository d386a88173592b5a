use nalgebra::{DMatrix, DVector};
use picar::glm::{cumlogit_fit, cumlogit_loglik, irls_fit, Link};
use picar::link::{cutoffs_from_alpha, ordinal_probs};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

fn design(n: usize, seed: u64) -> (DMatrix<f64>, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { rng.random_range(-1.0..1.0) });
    (x, rng)
}

/// Score and Fisher information computed directly from the definitions.
fn score_and_information(link: Link, x: &DMatrix<f64>, z: &[f64], beta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let eta = x * DVector::from_column_slice(beta);
    let k = x.ncols();
    let mut score = DVector::zeros(k);
    let mut info = DMatrix::zeros(k, k);
    for i in 0..x.nrows() {
        let (mu, w) = match link {
            Link::Logit => {
                let p = 1.0 / (1.0 + (-eta[i]).exp());
                (p, p * (1.0 - p))
            }
            Link::Log => (eta[i].exp(), eta[i].exp()),
        };
        let row = x.row(i).transpose();
        score += &row * (z[i] - mu);
        info += &row * row.transpose() * w;
    }
    (score, info)
}

#[test]
fn irls_solves_score_equations_with_fisher_covariance() {
    for link in [Link::Logit, Link::Log] {
        let (x, mut rng) = design(5000, 7);
        let truth = [0.2, 0.8, -0.5];
        let z: Vec<f64> = (0..x.nrows())
            .map(|i| {
                let eta: f64 = (0..3).map(|j| x[(i, j)] * truth[j]).sum();
                match link {
                    Link::Logit => f64::from(u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()))),
                    Link::Log => Poisson::new(eta.exp()).unwrap().sample(&mut rng),
                }
            })
            .collect();
        let fit = irls_fit(link, &x, &z);
        assert!(fit.converged);
        let (score, info) = score_and_information(link, &x, &z, &fit.coefficients);
        assert!(score.amax() < 1e-6 * x.nrows() as f64, "{link:?} score {score}");
        let cov = info.try_inverse().unwrap();
        assert!((&cov - &fit.covariance).amax() <= 1e-4 * cov.amax(), "{link:?}");
        for j in 0..3 {
            assert!((fit.coefficients[j] - truth[j]).abs() < 3.5 * cov[(j, j)].sqrt(), "{link:?} coef {j}");
        }
    }
}

#[test]
fn cumulative_logit_is_consistent_and_locally_optimal() {
    let (x, mut rng) = design(6000, 13);
    let x = x.columns(1, 2).into_owned();
    let slopes = [1.0, -0.6];
    let theta = [0.0, 1.0, 2.2];
    let z: Vec<f64> = (0..x.nrows())
        .map(|i| {
            let eta = x[(i, 0)] * slopes[0] + x[(i, 1)] * slopes[1];
            let probs = ordinal_probs(&theta, eta);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            probs.iter().position(|p| { acc += p; u < acc }).unwrap_or(probs.len() - 1) as f64 + 1.0
        })
        .collect();
    let fit = cumlogit_fit(&x, &z, 4).unwrap();
    assert!(fit.converged);
    let fitted = cutoffs_from_alpha(&fit.coefficients[..2]);
    for (a, b) in fitted.iter().zip(&theta) {
        assert!((a - b).abs() < 0.15, "cutoffs {fitted:?}");
    }
    for (j, &s) in slopes.iter().enumerate() {
        let se = fit.covariance[(2 + j, 2 + j)].sqrt();
        assert!((fit.coefficients[2 + j] - s).abs() < 3.5 * se, "slope {j}");
    }
    // Any small perturbation lowers the likelihood.
    let best = cumlogit_loglik(&x, &z, 4, &fit.coefficients);
    for d in 0..fit.coefficients.len() {
        for h in [-1e-3, 1e-3] {
            let mut p = fit.coefficients.clone();
            p[d] += h;
            assert!(cumlogit_loglik(&x, &z, 4, &p) <= best + 1e-9);
        }
    }
}
