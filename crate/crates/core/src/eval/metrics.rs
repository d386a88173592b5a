use crate::error::{PicarError, Result};

fn check(observed: &[f64], predicted: &[f64]) -> Result<()> {
    if observed.is_empty() {
        return Err(PicarError::EmptyInput("validation responses".into()));
    }
    if observed.len() != predicted.len() {
        return Err(PicarError::DimensionMismatch(format!(
            "{} observations but {} predictions",
            observed.len(),
            predicted.len()
        )));
    }
    Ok(())
}

/// Mean squared prediction error.
pub fn cvmspe(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    check(observed, predicted)?;
    let sse: f64 = observed.iter().zip(predicted).map(|(o, p)| (o - p).powi(2)).sum();
    Ok(sse / observed.len() as f64)
}

/// Proportion of predictions that differ from the observed category.
pub fn mpr(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    check(observed, predicted)?;
    let wrong = observed.iter().zip(predicted).filter(|(o, p)| o != p).count();
    Ok(wrong as f64 / observed.len() as f64)
}

/// Misclassification rate of probabilities thresholded at `threshold`.
pub fn misclassification(observed: &[f64], probabilities: &[f64], threshold: f64) -> Result<f64> {
    let labels: Vec<f64> = probabilities
        .iter()
        .map(|&p| if p >= threshold { 1.0 } else { 0.0 })
        .collect();
    mpr(observed, &labels)
}
