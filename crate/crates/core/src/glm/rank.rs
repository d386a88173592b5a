use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cumlogit_fit, irls_fit, GlmFit, Link};
use crate::error::{PicarError, Result};
use crate::eval::{cvmspe, mpr};
use crate::link::{cutoffs_from_alpha, exp_clamped, logistic, ordinal_probs};
use crate::randfield::{Dataset, Family};

/// Every integer rank from 2 to 50, then every fifth rank up to `max_rank`.
pub fn default_rank_grid(max_rank: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = (2..=max_rank.min(50)).collect();
    grid.extend((55..=max_rank).step_by(5));
    grid
}

/// Every integer rank from 2 to `max_rank`.
pub fn full_rank_grid(max_rank: usize) -> Vec<usize> {
    (2..=max_rank).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankSelection {
    pub grid: Vec<usize>,
    /// Held-out error per grid rank; infinite where the fit did not converge.
    pub scores: Vec<f64>,
    pub chosen: usize,
}

impl RankSelection {
    pub fn chosen_score(&self) -> f64 {
        let i = self.grid.iter().position(|&p| p == self.chosen).expect("chosen rank is in the grid");
        self.scores[i]
    }
}

/// `[X | AM_p]`, plus `X_1 * AM_p` columns for spatially varying slopes.
pub fn augmented_design(family: Family, x: &DMatrix<f64>, am: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
    let n = x.nrows();
    let k = x.ncols();
    let svc = family == Family::Svc;
    let cols = k + p * if svc { 2 } else { 1 };
    DMatrix::from_fn(n, cols, |i, j| {
        if j < k {
            x[(i, j)]
        } else if j < k + p {
            am[(i, j - k)]
        } else {
            x[(i, 0)] * am[(i, j - k - p)]
        }
    })
}

/// Maximum-likelihood fit of the family's GLM on `design`.
pub fn glm_fit(family: Family, design: &DMatrix<f64>, z: &[f64]) -> Result<GlmFit> {
    match family {
        Family::Binary => Ok(irls_fit(Link::Logit, design, z)),
        Family::Count | Family::Svc => Ok(irls_fit(Link::Log, design, z)),
        Family::Ordinal { categories } => cumlogit_fit(design, z, categories),
    }
}

/// Held-out score of a fitted GLM: squared error on the response scale, or
/// the misprediction rate of the modal category for ordinal data.
pub(crate) fn glm_score(family: Family, fit: &GlmFit, design_cv: &DMatrix<f64>, z_cv: &[f64]) -> Result<f64> {
    let eta = fit.linear_predictor(design_cv);
    match family {
        Family::Binary => cvmspe(z_cv, &eta.iter().map(|&e| logistic(e)).collect::<Vec<_>>()),
        Family::Count | Family::Svc => cvmspe(z_cv, &eta.iter().map(|&e| exp_clamped(e)).collect::<Vec<_>>()),
        Family::Ordinal { categories } => {
            let theta = cutoffs_from_alpha(&fit.coefficients[..categories - 2]);
            let pred: Vec<f64> = eta
                .iter()
                .map(|&e| {
                    let probs = ordinal_probs(&theta, e);
                    let best = probs
                        .iter()
                        .enumerate()
                        .fold(0, |b, (j, &p)| if p > probs[b] { j } else { b });
                    (best + 1) as f64
                })
                .collect();
            mpr(z_cv, &pred)
        }
    }
}

/// Fits the augmented GLM at every grid rank and picks the rank with the
/// lowest held-out error (lowest rank on ties).
pub fn select_rank(
    dataset: &Dataset,
    am_fit: &DMatrix<f64>,
    am_cv: &DMatrix<f64>,
    grid: &[usize],
) -> Result<RankSelection> {
    if grid.is_empty() {
        return Err(PicarError::EmptyInput("rank grid".into()));
    }
    let p_max = am_fit.ncols().min(am_cv.ncols());
    if let Some(&bad) = grid.iter().find(|&&p| p < 1 || p > p_max) {
        return Err(PicarError::InvalidArgument(format!(
            "grid rank {bad} outside 1..={p_max} available basis columns"
        )));
    }
    let family = dataset.family;
    let scores: Vec<f64> = grid
        .par_iter()
        .map(|&p| -> Result<f64> {
            let design = augmented_design(family, &dataset.fit.x, am_fit, p);
            let fit = glm_fit(family, &design, &dataset.fit.z)?;
            if !fit.converged {
                return Ok(f64::INFINITY);
            }
            let design_cv = augmented_design(family, &dataset.cv.x, am_cv, p);
            glm_score(family, &fit, &design_cv, &dataset.cv.z)
        })
        .collect::<Result<_>>()?;
    let best = scores
        .iter()
        .copied()
        .filter(|s| s.is_finite())
        .min_by(f64::total_cmp)
        .ok_or(PicarError::SelectionFailed)?;
    // Ties keep the lowest rank, whatever the grid order.
    let chosen = grid
        .iter()
        .zip(&scores)
        .filter(|(_, &s)| s == best)
        .map(|(&p, _)| p)
        .min()
        .expect("best score present");
    Ok(RankSelection {
        grid: grid.to_vec(),
        scores,
        chosen,
    })
}
