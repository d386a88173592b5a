//! Basis families used as alternatives to the Moran's basis.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lanczos::{self, LanczosOptions};
use super::{normalize_signs, DENSE_CAP};
use crate::error::{PicarError, Result};
use crate::mesh::{BoundingBox, Point2};
use crate::randfield::{covariance_matrix, MaternParams};

/// Largest node count for the dense Matérn covariance.
pub const MATERN_NODE_CAP: usize = 6000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AltBasisKind {
    Bisquare,
    ThinPlate,
    MaternEig,
}

impl AltBasisKind {
    pub fn label(&self) -> &'static str {
        match self {
            AltBasisKind::Bisquare => "bisquare",
            AltBasisKind::ThinPlate => "thin_plate",
            AltBasisKind::MaternEig => "matern_eig",
        }
    }
}

/// Basis evaluated at a fixed set of points (locations for knot-based
/// families, mesh nodes for the Matérn eigenbasis).
#[derive(Clone, Debug)]
pub struct AltBasis {
    pub kind: AltBasisKind,
    pub matrix: DMatrix<f64>,
}

/// `side x side` regular knot grid spanning the bounding box.
pub fn knot_grid(bbox: &BoundingBox, side: usize) -> Vec<Point2> {
    let coord = |lo: f64, hi: f64, i: usize| {
        if side == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (side - 1) as f64
        }
    };
    let mut knots = Vec::with_capacity(side * side);
    for j in 0..side {
        for i in 0..side {
            knots.push(Point2::new(coord(bbox.xmin, bbox.xmax, i), coord(bbox.ymin, bbox.ymax, j)));
        }
    }
    knots
}

pub fn bisquare(d: f64, radius: f64) -> f64 {
    if d < radius {
        let r = d / radius;
        (1.0 - r * r).powi(2)
    } else {
        0.0
    }
}

pub fn thin_plate(d: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else {
        d * d * d.ln()
    }
}

fn knot_matrix(locations: &[Point2], knots: &[Point2], f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
    if knots.is_empty() {
        return Err(PicarError::EmptyInput("knot set".into()));
    }
    Ok(DMatrix::from_fn(locations.len(), knots.len(), |i, j| {
        f(locations[i].dist(&knots[j]))
    }))
}

pub fn bisquare_basis(locations: &[Point2], knots: &[Point2], radius: f64) -> Result<AltBasis> {
    if !(radius > 0.0) {
        return Err(PicarError::InvalidArgument(format!(
            "bisquare radius must be positive, got {radius}"
        )));
    }
    Ok(AltBasis {
        kind: AltBasisKind::Bisquare,
        matrix: knot_matrix(locations, knots, |d| bisquare(d, radius))?,
    })
}

pub fn thin_plate_basis(locations: &[Point2], knots: &[Point2]) -> Result<AltBasis> {
    Ok(AltBasis {
        kind: AltBasisKind::ThinPlate,
        matrix: knot_matrix(locations, knots, thin_plate)?,
    })
}

/// Leading `p` eigenvectors of the Matérn covariance over the mesh nodes.
pub fn matern_eigenbasis(nodes: &[Point2], params: &MaternParams, p: usize) -> Result<AltBasis> {
    let m = nodes.len();
    if p == 0 || p >= m {
        return Err(PicarError::InvalidArgument(format!("rank must be in 1..{m}, got {p}")));
    }
    if m > MATERN_NODE_CAP {
        return Err(PicarError::InvalidArgument(format!(
            "Matérn eigenbasis needs a dense covariance; {m} nodes exceeds {MATERN_NODE_CAP}"
        )));
    }
    let cov = covariance_matrix(nodes, params);
    let pairs = match lanczos::largest_eigenpairs(&cov, p, &LanczosOptions::default()) {
        Ok(pairs) => pairs,
        Err(PicarError::EigensolverFailure { .. }) if m <= DENSE_CAP => {
            lanczos::dense_largest_eigenpairs(&cov, p)
        }
        Err(e) => return Err(e),
    };
    let mut vectors = pairs.vectors;
    normalize_signs(&mut vectors);
    Ok(AltBasis {
        kind: AltBasisKind::MaternEig,
        matrix: vectors,
    })
}
