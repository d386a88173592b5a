use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{cvmspe, misclassification, mpr};
use crate::error::{PicarError, Result};
use crate::link::{cutoffs_from_alpha, exp_clamped, logistic, ordinal_probs};
use crate::mcmc::{Chain, DrawSummary};
use crate::randfield::Family;

/// Posterior summary of one named parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    #[serde(flatten)]
    pub summary: DrawSummary,
}

/// Posterior predictive summaries at held-out locations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionSummary {
    pub family: Family,
    /// Posterior mean of the family mean (probability, rate, or expected
    /// category).
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Point prediction: `mean` for binary and count families, the modal
    /// category of the averaged probabilities for ordinal data.
    pub point: Vec<f64>,
    /// Averaged category probabilities, one row per site (ordinal only).
    pub category_probs: Option<Vec<Vec<f64>>>,
    pub parameters: Vec<ParameterSummary>,
}

impl PredictionSummary {
    /// 0/1 labels from thresholded probabilities (binary only).
    pub fn classify(&self, threshold: f64) -> Option<Vec<f64>> {
        (self.family == Family::Binary)
            .then(|| self.mean.iter().map(|&p| if p >= threshold { 1.0 } else { 0.0 }).collect())
    }

    /// CVMSPE for binary and count families, MPR for ordinal data.
    pub fn score(&self, observed: &[f64]) -> Result<f64> {
        match self.family {
            Family::Ordinal { .. } => mpr(observed, &self.point),
            _ => cvmspe(observed, &self.point),
        }
    }

    pub fn misclassification(&self, observed: &[f64], threshold: f64) -> Result<f64> {
        if self.family != Family::Binary {
            return Err(PicarError::InvalidArgument("misclassification needs binary data".into()));
        }
        misclassification(observed, &self.mean, threshold)
    }

    pub fn parameter(&self, name: &str) -> Option<&DrawSummary> {
        self.parameters.iter().find(|p| p.name == name).map(|p| &p.summary)
    }
}

fn modal_category(probs: &[f64]) -> f64 {
    let best = probs
        .iter()
        .enumerate()
        .fold(0, |b, (j, &p)| if p > probs[b] { j } else { b });
    (best + 1) as f64
}

/// Summarizes the chain's predictive distribution at `n_cv` new sites with
/// covariates `x_cv` and projected basis `am_cv`.
pub fn predict(chain: &Chain, am_cv: &DMatrix<f64>, x_cv: &DMatrix<f64>) -> Result<PredictionSummary> {
    let family = chain.family;
    let n = x_cv.nrows();
    let (k, p) = (chain.beta.ncols(), chain.delta.ncols());
    if x_cv.ncols() != k {
        return Err(PicarError::DimensionMismatch(format!(
            "validation design has {} columns, chain has {k} coefficients",
            x_cv.ncols()
        )));
    }
    if am_cv.ncols() != p || am_cv.nrows() != n {
        return Err(PicarError::DimensionMismatch(format!(
            "validation basis is {}x{}, expected {n}x{p}",
            am_cv.nrows(),
            am_cv.ncols()
        )));
    }
    let draws = chain.num_draws();
    if draws == 0 {
        return Err(PicarError::EmptyInput("chain has no stored draws".into()));
    }
    let categories = match family {
        Family::Ordinal { categories } => categories,
        _ => 1,
    };

    // Per-draw linear predictors, one column per draw.
    let mut eta = x_cv * chain.beta.transpose() + am_cv * chain.delta.transpose();
    if family == Family::Svc {
        let slope = am_cv * chain.delta_beta.transpose();
        for d in 0..draws {
            for i in 0..n {
                eta[(i, d)] += x_cv[(i, 0)] * slope[(i, d)];
            }
        }
    }

    // Family means (and category probabilities) per draw; summed in draw order.
    let per_draw: Vec<(Vec<f64>, Vec<f64>)> = (0..draws)
        .into_par_iter()
        .map(|d| {
            let col = eta.column(d);
            match family {
                Family::Binary => (col.iter().map(|&e| logistic(e)).collect(), Vec::new()),
                Family::Count | Family::Svc => (col.iter().map(|&e| exp_clamped(e)).collect(), Vec::new()),
                Family::Ordinal { .. } => {
                    let theta = cutoffs_from_alpha(&chain.alpha.row(d).iter().copied().collect::<Vec<_>>());
                    let mut means = Vec::with_capacity(n);
                    let mut probs = Vec::with_capacity(n * categories);
                    for &e in col.iter() {
                        let pr = ordinal_probs(&theta, e);
                        means.push(pr.iter().enumerate().map(|(j, q)| (j + 1) as f64 * q).sum());
                        probs.extend(pr);
                    }
                    (means, probs)
                }
            }
        })
        .collect();

    let mut sum = DVector::<f64>::zeros(n);
    let mut prob_sum = vec![0.0; if categories > 1 { n * categories } else { 0 }];
    for (means, probs) in &per_draw {
        for i in 0..n {
            sum[i] += means[i];
        }
        for (a, b) in prob_sum.iter_mut().zip(probs) {
            *a += b;
        }
    }
    let dn = draws as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / dn).collect();
    let sd: Vec<f64> = (0..n)
        .map(|i| {
            if draws < 2 {
                return 0.0;
            }
            let ss: f64 = per_draw.iter().map(|(m, _)| (m[i] - mean[i]).powi(2)).sum();
            (ss / (dn - 1.0)).sqrt()
        })
        .collect();

    let (point, category_probs) = if let Family::Ordinal { .. } = family {
        let rows: Vec<Vec<f64>> = prob_sum.chunks(categories).map(|r| r.iter().map(|v| v / dn).collect()).collect();
        (rows.iter().map(|r| modal_category(r)).collect(), Some(rows))
    } else {
        (mean.clone(), None)
    };

    Ok(PredictionSummary {
        family,
        mean,
        sd,
        point,
        category_probs,
        parameters: parameter_summaries(chain),
    })
}

/// Summaries of alpha, beta, and precision parameters.
pub fn parameter_summaries(chain: &Chain) -> Vec<ParameterSummary> {
    chain
        .named_series()
        .into_iter()
        .filter(|(name, _)| !name.starts_with("delta"))
        .map(|(name, draws)| ParameterSummary {
            summary: DrawSummary::of(&draws),
            name,
        })
        .collect()
}
