use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::MaternParams;
use crate::error::{PicarError, Result};
use crate::mesh::Point2;

/// Response family of a model or dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "family")]
pub enum Family {
    Binary,
    Count,
    Svc,
    Ordinal { categories: usize },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Binary => "binary",
            Family::Count => "count",
            Family::Svc => "svc",
            Family::Ordinal { .. } => "ordinal",
        }
    }

    /// Checks one response value against the family's support.
    pub fn admits(&self, z: f64) -> bool {
        match *self {
            Family::Binary => z == 0.0 || z == 1.0,
            Family::Count | Family::Svc => z >= 0.0 && z.fract() == 0.0 && z.is_finite(),
            Family::Ordinal { categories } => {
                z.fract() == 0.0 && z >= 1.0 && z <= categories as f64
            }
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Ordinal { categories } => write!(f, "ordinal:{categories}"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for Family {
    type Err = PicarError;

    /// Accepts `binary`, `count`, `poisson`, `svc`, `ordinal` (4 categories)
    /// and `ordinal:J`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "binary" => Ok(Family::Binary),
            "count" | "poisson" => Ok(Family::Count),
            "svc" => Ok(Family::Svc),
            "ordinal" => Ok(Family::Ordinal { categories: 4 }),
            other => {
                let j = other
                    .strip_prefix("ordinal:")
                    .and_then(|j| j.parse::<usize>().ok())
                    .filter(|&j| j >= 2)
                    .ok_or_else(|| PicarError::Parse(format!("unknown family {s:?}")))?;
                Ok(Family::Ordinal { categories: j })
            }
        }
    }
}

/// One subset (fit or validation) of a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub locations: Vec<Point2>,
    pub x: DMatrix<f64>,
    pub z: Vec<f64>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    fn rows(source: &[Point2], x: &DMatrix<f64>, z: &[f64], range: std::ops::Range<usize>) -> Self {
        Split {
            locations: source[range.clone()].to_vec(),
            x: x.rows(range.start, range.len()).into_owned(),
            z: z[range].to_vec(),
        }
    }
}

/// Simulation provenance: the parameters and latent fields behind a
/// synthetic dataset, in fit-then-cv site order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub beta: Vec<f64>,
    pub matern: MaternParams,
    pub cutoffs: Option<Vec<f64>>,
    pub cross_covariance: Option<[[f64; 2]; 2]>,
    pub nugget: Option<f64>,
    pub seed: u64,
    pub w: Vec<f64>,
    pub b: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub family: Family,
    pub fit: Split,
    pub cv: Split,
    pub truth: Option<Truth>,
}

impl Dataset {
    /// Splits jointly drawn rows: the first `n_fit` are the fit subset.
    pub fn from_joint(
        family: Family,
        locations: Vec<Point2>,
        x: DMatrix<f64>,
        z: Vec<f64>,
        n_fit: usize,
        truth: Option<Truth>,
    ) -> Self {
        let total = z.len();
        Dataset {
            family,
            fit: Split::rows(&locations, &x, &z, 0..n_fit),
            cv: Split::rows(&locations, &x, &z, n_fit..total),
            truth,
        }
    }

    pub fn num_covariates(&self) -> usize {
        self.fit.x.ncols()
    }

    /// Responses of both subsets, fit first.
    pub fn all_z(&self) -> impl Iterator<Item = f64> + '_ {
        self.fit.z.iter().chain(&self.cv.z).copied()
    }

    /// All locations, fit first.
    pub fn all_locations(&self) -> Vec<Point2> {
        self.fit.locations.iter().chain(&self.cv.locations).copied().collect()
    }

    /// Checks sizes, finiteness and response support.
    pub fn validate(&self) -> Result<()> {
        if self.fit.is_empty() || self.cv.is_empty() {
            return Err(PicarError::EmptyInput("dataset needs fit and cv rows".into()));
        }
        let k = self.num_covariates();
        for (name, split) in [("fit", &self.fit), ("cv", &self.cv)] {
            if split.x.ncols() != k || split.x.nrows() != split.len() || split.locations.len() != split.len() {
                return Err(PicarError::DimensionMismatch(format!("{name} split has inconsistent sizes")));
            }
            if let Some(i) = split.z.iter().position(|&z| !self.family.admits(z)) {
                return Err(PicarError::InvalidArgument(format!(
                    "{name} row {i}: response {} outside the {} support",
                    split.z[i], self.family
                )));
            }
            if split.x.iter().any(|v| !v.is_finite())
                || split.locations.iter().any(|p| !p.x.is_finite() || !p.y.is_finite())
            {
                return Err(PicarError::InvalidArgument(format!("{name} split has non-finite values")));
            }
        }
        Ok(())
    }

    /// CSV with columns `x,y,x1..xk,z,split`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let k = self.num_covariates();
        let mut header = vec!["x".to_string(), "y".to_string()];
        header.extend((1..=k).map(|j| format!("x{j}")));
        header.push("z".into());
        header.push("split".into());
        w.write_record(&header)?;
        for (label, split) in [("fit", &self.fit), ("cv", &self.cv)] {
            for i in 0..split.len() {
                let mut rec = vec![format!("{:?}", split.locations[i].x), format!("{:?}", split.locations[i].y)];
                rec.extend((0..k).map(|j| format!("{:?}", split.x[(i, j)])));
                rec.push(format!("{}", split.z[i]));
                rec.push(label.into());
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV layout written by [`Dataset::write_csv`]. Rows may be in
    /// any order; the truth sidecar is not part of the CSV.
    pub fn read_csv<R: Read>(reader: R, family: Family) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let k = header.len().saturating_sub(4);
        let expected: Vec<String> = ["x", "y"]
            .iter()
            .map(|s| s.to_string())
            .chain((1..=k).map(|j| format!("x{j}")))
            .chain(["z".to_string(), "split".to_string()])
            .collect();
        if header.len() < 5 || header != expected {
            return Err(PicarError::Parse(format!(
                "expected columns x,y,x1..xk,z,split; got {}",
                header.join(",")
            )));
        }
        let mut fit = (Vec::new(), Vec::new(), Vec::new());
        let mut cv = (Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let num = |c: usize| -> Result<f64> {
                rec[c].trim().parse::<f64>().map_err(|_| {
                    PicarError::Parse(format!("row {}: column {} is not a number", line + 1, header[c]))
                })
            };
            let target = match rec[k + 3].trim() {
                "fit" => &mut fit,
                "cv" => &mut cv,
                other => {
                    return Err(PicarError::Parse(format!(
                        "row {}: split must be fit or cv, got {other:?}",
                        line + 1
                    )))
                }
            };
            target.0.push(Point2::new(num(0)?, num(1)?));
            for j in 0..k {
                target.1.push(num(2 + j)?);
            }
            target.2.push(num(k + 2)?);
        }
        let build = |(locs, xs, z): (Vec<Point2>, Vec<f64>, Vec<f64>)| Split {
            x: DMatrix::from_row_slice(z.len(), k, &xs),
            locations: locs,
            z,
        };
        let ds = Dataset {
            family,
            fit: build(fit),
            cv: build(cv),
            truth: None,
        };
        ds.validate()?;
        Ok(ds)
    }
}
