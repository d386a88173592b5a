//! Link functions and ordinal category probabilities with overflow guards.

/// Linear predictors are clamped to this magnitude before exponentiation.
pub const ETA_CLAMP: f64 = 35.0;

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `e^eta` with the exponent clamped to `ETA_CLAMP`.
pub fn exp_clamped(eta: f64) -> f64 {
    eta.clamp(-ETA_CLAMP, ETA_CLAMP).exp()
}

/// Cutoffs `theta_1 = 0 < theta_2 < ...` from unconstrained increments
/// `alpha_2, alpha_3, ...`: `theta_j = sum_{i=2..j} exp(alpha_i)`.
pub fn cutoffs_from_alpha(alpha: &[f64]) -> Vec<f64> {
    let mut theta = Vec::with_capacity(alpha.len() + 1);
    theta.push(0.0);
    let mut acc = 0.0;
    for a in alpha {
        acc += a.exp();
        theta.push(acc);
    }
    theta
}

/// Inverse of [`cutoffs_from_alpha`]; `None` unless `theta` starts at 0 and
/// increases strictly.
pub fn alpha_from_cutoffs(theta: &[f64]) -> Option<Vec<f64>> {
    if theta.first() != Some(&0.0) {
        return None;
    }
    theta
        .windows(2)
        .map(|w| (w[1] > w[0]).then(|| (w[1] - w[0]).ln()))
        .collect()
}

/// `log P(z = category)` for categories `1..=J` where `J = theta.len() + 1`,
/// under `P(z <= j) = logistic(theta_j - eta)`.
pub fn ordinal_log_prob(category: usize, theta: &[f64], eta: f64) -> f64 {
    let j_max = theta.len() + 1;
    debug_assert!((1..=j_max).contains(&category));
    // log P = log(logistic(a) - logistic(b)) with a the upper, b the lower cutoff.
    let upper = (category < j_max).then(|| theta[category - 1] - eta);
    let lower = (category > 1).then(|| theta[category - 2] - eta);
    match (upper, lower) {
        (Some(a), None) => -softplus(-a),
        (None, Some(b)) => -softplus(b),
        (Some(a), Some(b)) => -softplus(-a) - softplus(b) + (-(b - a).exp_m1()).ln(),
        (None, None) => 0.0,
    }
}

/// Category probabilities `P(z = 1..=J)`.
pub fn ordinal_probs(theta: &[f64], eta: f64) -> Vec<f64> {
    let mut probs = Vec::with_capacity(theta.len() + 1);
    let mut prev = 0.0;
    for &t in theta {
        let g = logistic(t - eta);
        probs.push(g - prev);
        prev = g;
    }
    probs.push(1.0 - prev);
    probs
}
