use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{PicarError, Result};

/// Minimum series length accepted by [`ess`].
pub const MIN_DRAWS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EssEstimate {
    pub value: f64,
    /// Set for a constant series, reported with value 1.
    pub degenerate: bool,
}

impl EssEstimate {
    pub fn per_second(&self, seconds: f64) -> f64 {
        self.value / seconds
    }
}

/// Biased autocovariances at every lag via zero-padded FFT.
fn autocovariance(draws: &[f64], mean: f64) -> Vec<f64> {
    let n = draws.len();
    let len = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = draws
        .iter()
        .map(|d| Complex::new(d - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(len)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf[..n].iter().map(|c| c.re / (len as f64 * n as f64)).collect()
}

/// Effective sample size by Geyer's initial monotone positive sequence.
pub fn ess(draws: &[f64]) -> Result<EssEstimate> {
    let n = draws.len();
    if n < MIN_DRAWS {
        return Err(PicarError::InvalidArgument(format!(
            "effective sample size needs at least {MIN_DRAWS} draws, got {n}"
        )));
    }
    if draws.iter().all(|&d| d == draws[0]) {
        return Ok(EssEstimate {
            value: 1.0,
            degenerate: true,
        });
    }
    let mean = draws.iter().sum::<f64>() / n as f64;
    let acov = autocovariance(draws, mean);
    let autocov = |lag: usize| acov[lag];
    let gamma0 = autocov(0);
    // Sum of paired autocovariances until the first nonpositive pair, each
    // pair capped by its predecessor.
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = autocov(2 * m) + autocov(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        m += 1;
    }
    let tau = (-gamma0 + 2.0 * sum) / gamma0;
    Ok(EssEstimate {
        value: n as f64 / tau.max(1.0 / n as f64),
        degenerate: false,
    })
}
