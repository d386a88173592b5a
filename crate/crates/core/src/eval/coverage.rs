use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PicarError, Result};
use crate::pipeline::fit_precisions;
use crate::study::StudyConfig;

/// Smallest replicate count accepted by [`coverage_study`].
pub const MIN_REPLICATES: usize = 10;

/// Whether one replicate's interval for one parameter held the truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageRecord {
    pub replicate: usize,
    pub precision: String,
    pub parameter: String,
    pub covered: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub precision: String,
    pub parameter: String,
    /// Successful replicates.
    pub replicates: usize,
    pub covered: usize,
    pub coverage: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageFailure {
    pub replicate: usize,
    pub precision: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageTable {
    pub rows: Vec<CoverageRow>,
    pub failures: Vec<CoverageFailure>,
}

impl CoverageTable {
    pub fn coverage(&self, precision: &str, parameter: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.precision == precision && r.parameter == parameter)
            .map(|r| r.coverage)
    }
}

/// Aggregates per-replicate records, keeping first-seen order of precision
/// kinds and parameters.
pub fn tabulate_coverage(records: &[CoverageRecord], failures: Vec<CoverageFailure>) -> CoverageTable {
    let mut rows: Vec<CoverageRow> = Vec::new();
    for rec in records {
        let row = match rows
            .iter_mut()
            .position(|r| r.precision == rec.precision && r.parameter == rec.parameter)
        {
            Some(i) => &mut rows[i],
            None => {
                rows.push(CoverageRow {
                    precision: rec.precision.clone(),
                    parameter: rec.parameter.clone(),
                    replicates: 0,
                    covered: 0,
                    coverage: 0.0,
                });
                rows.last_mut().expect("just pushed")
            }
        };
        row.replicates += 1;
        row.covered += usize::from(rec.covered);
    }
    for r in &mut rows {
        r.coverage = r.covered as f64 / r.replicates as f64;
    }
    CoverageTable { rows, failures }
}

/// Fraction of replicates whose 95% interval contains the generating value,
/// per parameter and precision kind. Failed fits are excluded and listed.
pub fn coverage_study(config: &StudyConfig, replicates: usize) -> Result<CoverageTable> {
    if replicates < MIN_REPLICATES {
        return Err(PicarError::InvalidArgument(format!(
            "coverage needs at least {MIN_REPLICATES} replicates, got {replicates}"
        )));
    }
    config.validate()?;
    let truth = config.truth();
    let fit = config.fit_config();
    let per_replicate: Vec<(Vec<CoverageRecord>, Vec<CoverageFailure>)> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut records = Vec::new();
            let mut failures = Vec::new();
            let fail = |kind: &str, e: PicarError| CoverageFailure {
                replicate: r,
                precision: kind.to_string(),
                error: e.to_string(),
            };
            let outcome = config
                .simulate(r as u64)
                .map_err(|e| e.in_stage("data"))
                .and_then(|ds| fit_precisions(&ds, &fit, &config.precisions, r as u64));
            match outcome {
                Err(e) => failures.extend(config.precisions.iter().map(|k| fail(k.label(), e.clone()))),
                Ok(fits) => {
                    for (kind, res) in config.precisions.iter().zip(fits) {
                        match res {
                            Err(e) => failures.push(fail(kind.label(), e)),
                            Ok(out) => {
                                for (name, value) in &truth {
                                    if let Some(s) = out.prediction.parameter(name) {
                                        records.push(CoverageRecord {
                                            replicate: r,
                                            precision: kind.label().to_string(),
                                            parameter: name.clone(),
                                            covered: s.covers(*value),
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
            (records, failures)
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (r, f) in per_replicate {
        records.extend(r);
        failures.extend(f);
    }
    Ok(tabulate_coverage(&records, failures))
}
