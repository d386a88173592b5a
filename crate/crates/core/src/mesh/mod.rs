//! Triangular meshes over a 2-D domain and piecewise-linear projection onto
//! arbitrary locations.

mod adjacency;
pub mod delaunay;
mod projector;

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adjacency::Adjacency;
pub use projector::{Location, Locator, Projector};

use crate::error::{PicarError, Result};

/// Nodes closer than this are merged before triangulation.
pub const DEDUP_TOL: f64 = 1e-12;

/// Relative jitter applied to grid nodes, as a fraction of the grid spacing.
const NODE_JITTER: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl BoundingBox {
    pub fn of(points: &[Point2]) -> Option<Self> {
        let first = points.first()?;
        let mut b = BoundingBox {
            xmin: first.x,
            xmax: first.x,
            ymin: first.y,
            ymax: first.y,
        };
        for p in points {
            b.xmin = b.xmin.min(p.x);
            b.xmax = b.xmax.max(p.x);
            b.ymin = b.ymin.min(p.y);
            b.ymax = b.ymax.max(p.y);
        }
        Some(b)
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    /// Grows each side by `fraction` of the corresponding extent.
    pub fn expanded(&self, fraction: f64) -> Self {
        let dx = fraction * self.width();
        let dy = fraction * self.height();
        BoundingBox {
            xmin: self.xmin - dx,
            xmax: self.xmax + dx,
            ymin: self.ymin - dy,
            ymax: self.ymax + dy,
        }
    }
}

/// A Delaunay triangulation of mesh nodes.
///
/// Triangles are stored counter-clockwise with their smallest vertex index
/// first and are sorted lexicographically, so two meshes built from the same
/// nodes compare equal.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point2>,
    triangles: Vec<[usize; 3]>,
    /// `neighbors[t][k]`: triangle across the edge opposite vertex `k`.
    neighbors: Vec<[Option<usize>; 3]>,
    boundary_box: BoundingBox,
}

impl Mesh {
    /// Delaunay-triangulates an arbitrary node set.
    pub fn from_nodes(nodes: Vec<Point2>) -> Result<Self> {
        let (nodes, _) = delaunay::dedup_points(&nodes, DEDUP_TOL);
        let triangles = delaunay::triangulate(&nodes)?;
        let bbox = BoundingBox::of(&nodes).expect("triangulation needs nodes");
        Self::from_parts(nodes, triangles, bbox)
    }

    /// Assembles a mesh from explicit triangles, normalizing orientation.
    pub fn from_parts(
        vertices: Vec<Point2>,
        triangles: Vec<[usize; 3]>,
        boundary_box: BoundingBox,
    ) -> Result<Self> {
        let m = vertices.len();
        let mut tris = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= m) {
                return Err(PicarError::InvalidArgument(format!(
                    "triangle {t} references a vertex outside 0..{m}"
                )));
            }
            let area2 = delaunay::orient(&vertices[tri[0]], &vertices[tri[1]], &vertices[tri[2]]);
            if area2 == 0.0 {
                return Err(PicarError::InvalidArgument(format!("triangle {t} is degenerate")));
            }
            let ccw = if area2 > 0.0 { *tri } else { [tri[0], tri[2], tri[1]] };
            tris.push(delaunay::normalize_triangle(ccw));
        }
        tris.sort_unstable();
        let neighbors = compute_neighbors(&tris);
        Ok(Mesh {
            vertices,
            triangles: tris,
            neighbors,
            boundary_box,
        })
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn neighbors(&self) -> &[[Option<usize>; 3]] {
        &self.neighbors
    }

    pub fn boundary_box(&self) -> BoundingBox {
        self.boundary_box
    }

    /// Number of vertices `m`.
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        0.5 * delaunay::orient(&self.vertices[a], &self.vertices[b], &self.vertices[c])
    }

    pub fn adjacency(&self) -> Adjacency {
        Adjacency::from_mesh(self)
    }

    /// Locates a single point. Batch queries should reuse a [`Locator`].
    pub fn locate(&self, p: Point2) -> Result<Location> {
        Locator::new(self).locate(p)
    }

    pub fn projector(&self, locations: &[Point2]) -> Result<Projector> {
        Projector::build(self, locations)
    }

    /// Plain-text export: `m t`, then `x y` per vertex, then `i j k` per
    /// triangle (0-based).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.vertices.len(), self.triangles.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{:?} {:?}", v.x, v.y);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| PicarError::Parse("empty mesh file".into()))?;
        let counts = parse_fields::<usize>(header, 2, "header")?;
        let (m, t) = (counts[0], counts[1]);
        let mut vertices = Vec::with_capacity(m);
        for i in 0..m {
            let line = lines
                .next()
                .ok_or_else(|| PicarError::Parse(format!("missing vertex line {i}")))?;
            let xy = parse_fields::<f64>(line, 2, "vertex")?;
            vertices.push(Point2::new(xy[0], xy[1]));
        }
        let mut triangles = Vec::with_capacity(t);
        for i in 0..t {
            let line = lines
                .next()
                .ok_or_else(|| PicarError::Parse(format!("missing triangle line {i}")))?;
            let ijk = parse_fields::<usize>(line, 3, "triangle")?;
            triangles.push([ijk[0], ijk[1], ijk[2]]);
        }
        if lines.next().is_some() {
            return Err(PicarError::Parse("trailing content after triangles".into()));
        }
        let bbox = BoundingBox::of(&vertices)
            .ok_or_else(|| PicarError::Parse("mesh has no vertices".into()))?;
        Self::from_parts(vertices, triangles, bbox)
    }
}

fn parse_fields<T: std::str::FromStr>(line: &str, n: usize, what: &str) -> Result<Vec<T>> {
    let out: Vec<T> = line
        .split_whitespace()
        .map(|f| f.parse::<T>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| PicarError::Parse(format!("bad {what} line: {line:?}")))?;
    if out.len() != n {
        return Err(PicarError::Parse(format!(
            "{what} line needs {n} fields: {line:?}"
        )));
    }
    Ok(out)
}

fn compute_neighbors(tris: &[[usize; 3]]) -> Vec<[Option<usize>; 3]> {
    let mut edge_owner: HashMap<(usize, usize), (usize, usize)> =
        HashMap::with_capacity(tris.len() * 3);
    for (t, tri) in tris.iter().enumerate() {
        for k in 0..3 {
            edge_owner.insert((tri[(k + 1) % 3], tri[(k + 2) % 3]), (t, k));
        }
    }
    tris.iter()
        .map(|tri| {
            let mut nb = [None; 3];
            for (k, slot) in nb.iter_mut().enumerate() {
                let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
                *slot = edge_owner.get(&(b, a)).map(|&(t, _)| t);
            }
            nb
        })
        .collect()
}

/// Jittered quasi-uniform grid covering `bbox` with roughly `target` nodes.
///
/// Corner nodes are fixed and edge nodes only move along their edge, so the
/// convex hull of the nodes is exactly `bbox`.
pub fn grid_nodes(bbox: &BoundingBox, target: usize, seed: u64) -> Vec<Point2> {
    let (w, h) = (bbox.width(), bbox.height());
    let nx = ((target as f64 * w / h).sqrt().round() as usize).max(2);
    let ny = ((target as f64 / nx as f64).round() as usize).max(2);
    let dx = w / (nx - 1) as f64;
    let dy = h / (ny - 1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let jx: f64 = rng.random_range(-NODE_JITTER..NODE_JITTER);
            let jy: f64 = rng.random_range(-NODE_JITTER..NODE_JITTER);
            let x_edge = i == 0 || i == nx - 1;
            let y_edge = j == 0 || j == ny - 1;
            let x = if x_edge {
                if i == 0 { bbox.xmin } else { bbox.xmax }
            } else {
                bbox.xmin + (i as f64 + jx) * dx
            };
            let y = if y_edge {
                if j == 0 { bbox.ymin } else { bbox.ymax }
            } else {
                bbox.ymin + (j as f64 + jy) * dy
            };
            nodes.push(Point2::new(x, y));
        }
    }
    nodes
}

/// Builds a mesh enveloping `locations` with approximately `target_nodes`
/// vertices on the bounding box expanded by `buffer_fraction` per side.
pub fn build_mesh(
    locations: &[Point2],
    target_nodes: usize,
    buffer_fraction: f64,
    seed: u64,
) -> Result<Mesh> {
    if locations.is_empty() {
        return Err(PicarError::EmptyInput("no locations".into()));
    }
    if target_nodes < 4 {
        return Err(PicarError::InvalidArgument(format!(
            "mesh needs at least 4 nodes, got {target_nodes}"
        )));
    }
    if !(buffer_fraction >= 0.0) || !buffer_fraction.is_finite() {
        return Err(PicarError::InvalidArgument(format!(
            "buffer fraction must be nonnegative, got {buffer_fraction}"
        )));
    }
    if locations.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(PicarError::InvalidArgument("non-finite location".into()));
    }
    let data_box = BoundingBox::of(locations).expect("nonempty");
    if data_box.width() <= 0.0 || data_box.height() <= 0.0 {
        return Err(PicarError::DegenerateDomain(
            "locations span no area; fewer than 3 non-collinear nodes".into(),
        ));
    }
    let bbox = data_box.expanded(buffer_fraction);
    let nodes = grid_nodes(&bbox, target_nodes, seed);
    let (nodes, _) = delaunay::dedup_points(&nodes, DEDUP_TOL);
    let triangles = delaunay::triangulate(&nodes)?;
    Mesh::from_parts(nodes, triangles, bbox)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_corners() -> Vec<Point2> {
        vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ]
    }

    #[test]
    fn minimal_square_mesh() {
        let mesh = build_mesh(&unit_corners(), 4, 0.0, 1).unwrap();
        assert_eq!(mesh.num_vertices(), 4);
        assert_eq!(mesh.num_triangles(), 2);
        let area: f64 = (0..2).map(|t| mesh.triangle_area(t)).sum();
        assert!((area - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_location_is_degenerate() {
        let err = build_mesh(&[Point2::new(0.3, 0.3)], 10, 0.1, 0).unwrap_err();
        assert!(matches!(err, PicarError::DegenerateDomain(_)));
    }

    #[test]
    fn collinear_locations_are_degenerate() {
        let locs: Vec<_> = (0..10).map(|i| Point2::new(i as f64, 0.5)).collect();
        assert!(matches!(
            build_mesh(&locs, 50, 0.1, 0),
            Err(PicarError::DegenerateDomain(_))
        ));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(build_mesh(&[], 10, 0.1, 0).is_err());
        assert!(build_mesh(&unit_corners(), 3, 0.1, 0).is_err());
        assert!(build_mesh(&unit_corners(), 10, -0.1, 0).is_err());
    }

    #[test]
    fn mesh_covers_expanded_box() {
        let mesh = build_mesh(&unit_corners(), 400, 0.1, 9).unwrap();
        let area: f64 = (0..mesh.num_triangles()).map(|t| mesh.triangle_area(t)).sum();
        assert!((area - 1.44).abs() < 1e-12, "area {area}");
        assert!((0..mesh.num_triangles()).all(|t| mesh.triangle_area(t) > 0.0));
    }

    #[test]
    fn deterministic_given_seed() {
        let a = build_mesh(&unit_corners(), 300, 0.1, 5).unwrap();
        let b = build_mesh(&unit_corners(), 300, 0.1, 5).unwrap();
        let c = build_mesh(&unit_corners(), 300, 0.1, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let mesh = build_mesh(&unit_corners(), 60, 0.1, 2).unwrap();
        let text = mesh.to_text();
        assert!(text.starts_with(&format!("{} {}\n", mesh.num_vertices(), mesh.num_triangles())));
        let back = Mesh::from_text(&text).unwrap();
        assert_eq!(back.vertices(), mesh.vertices());
        assert_eq!(back.triangles(), mesh.triangles());
    }

    #[test]
    fn text_import_rejects_bad_indices() {
        let bad = "3 1\n0 0\n1 0\n0 1\n0 1 7\n";
        assert!(Mesh::from_text(bad).is_err());
        let short = "3 1\n0 0\n1 0\n";
        assert!(Mesh::from_text(short).is_err());
    }

    #[test]
    fn text_import_normalizes_orientation() {
        let cw = "3 1\n0 0\n0 1\n1 0\n0 1 2\n";
        let mesh = Mesh::from_text(cw).unwrap();
        assert!(mesh.triangle_area(0) > 0.0);
    }
}
