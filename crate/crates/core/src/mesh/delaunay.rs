//! Incremental Bowyer–Watson Delaunay triangulation.
//!
//! Points are inserted in a spatially coherent order so that the visibility
//! walk used for point location stays short. Orientation and in-circle tests
//! use adaptive-precision predicates, so cocircular and collinear inputs are
//! classified exactly; a cocircular fourth point is treated as lying outside
//! the circle, which keeps the cavity strictly star-shaped.

use std::collections::HashMap;

use robust::{incircle, orient2d, Coord};

use super::Point2;
use crate::error::{PicarError, Result};

const NONE: usize = usize::MAX;

/// Scale of the enclosing super-triangle relative to the point-set extent.
const SUPER_SCALE: f64 = 1.0e4;

#[derive(Clone, Copy, Debug)]
struct Tri {
    v: [usize; 3],
    /// `nbr[i]` is the triangle across the edge opposite `v[i]`.
    nbr: [usize; 3],
    alive: bool,
}

#[inline]
fn coord(p: &Point2) -> Coord<f64> {
    Coord { x: p.x, y: p.y }
}

#[inline]
pub(crate) fn orient(a: &Point2, b: &Point2, c: &Point2) -> f64 {
    orient2d(coord(a), coord(b), coord(c))
}

#[inline]
fn in_circle(a: &Point2, b: &Point2, c: &Point2, d: &Point2) -> f64 {
    incircle(coord(a), coord(b), coord(c), coord(d))
}

/// Removes points closer than `tol` to an earlier point. Returns the kept
/// points and, for every input index, the index of its representative.
pub fn dedup_points(points: &[Point2], tol: f64) -> (Vec<Point2>, Vec<usize>) {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .x
            .total_cmp(&points[b].x)
            .then(points[a].y.total_cmp(&points[b].y))
            .then(a.cmp(&b))
    });
    let mut rep = vec![NONE; points.len()];
    // Representative is the lowest original index in each cluster.
    for (pos, &i) in order.iter().enumerate() {
        if rep[i] != NONE {
            continue;
        }
        rep[i] = i;
        for &j in &order[pos + 1..] {
            if points[j].x - points[i].x > tol {
                break;
            }
            if rep[j] == NONE && (points[j].y - points[i].y).abs() <= tol {
                rep[j] = i;
            }
        }
    }
    let mut kept = Vec::new();
    let mut new_index = vec![NONE; points.len()];
    for i in 0..points.len() {
        if rep[i] == i {
            new_index[i] = kept.len();
            kept.push(points[i]);
        }
    }
    let map = (0..points.len()).map(|i| new_index[rep[i]]).collect();
    (kept, map)
}

/// Insertion order: serpentine sweep over a coarse grid of buckets.
fn insertion_order(points: &[Point2]) -> Vec<usize> {
    let n = points.len();
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in points {
        xmin = xmin.min(p.x);
        xmax = xmax.max(p.x);
        ymin = ymin.min(p.y);
        ymax = ymax.max(p.y);
    }
    let cells = ((n as f64).sqrt().ceil() as usize).max(1);
    let w = (xmax - xmin).max(f64::MIN_POSITIVE);
    let h = (ymax - ymin).max(f64::MIN_POSITIVE);
    let key = |p: &Point2| {
        let cx = (((p.x - xmin) / w * cells as f64) as usize).min(cells - 1);
        let cy = (((p.y - ymin) / h * cells as f64) as usize).min(cells - 1);
        let cx = if cy % 2 == 0 { cx } else { cells - 1 - cx };
        (cy, cx)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| key(&points[a]).cmp(&key(&points[b])).then(a.cmp(&b)));
    order
}

/// Delaunay triangulation of a set of distinct points.
///
/// Returns counter-clockwise vertex triples indexing into `points`.
pub fn triangulate(points: &[Point2]) -> Result<Vec<[usize; 3]>> {
    let n = points.len();
    if n < 3 {
        return Err(PicarError::DegenerateDomain(format!(
            "need at least 3 nodes, got {n}"
        )));
    }
    if let Some(p) = points.iter().find(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(PicarError::InvalidArgument(format!(
            "non-finite node ({}, {})",
            p.x, p.y
        )));
    }
    if !has_non_collinear_triple(points) {
        return Err(PicarError::DegenerateDomain(
            "all nodes are collinear".to_string(),
        ));
    }

    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in points {
        xmin = xmin.min(p.x);
        xmax = xmax.max(p.x);
        ymin = ymin.min(p.y);
        ymax = ymax.max(p.y);
    }
    let cx = 0.5 * (xmin + xmax);
    let cy = 0.5 * (ymin + ymax);
    let d = (xmax - xmin).max(ymax - ymin).max(1e-300) * SUPER_SCALE;

    let mut pts: Vec<Point2> = points.to_vec();
    pts.push(Point2::new(cx - 2.0 * d, cy - d));
    pts.push(Point2::new(cx + 2.0 * d, cy - d));
    pts.push(Point2::new(cx, cy + 2.0 * d));

    let mut tris = vec![Tri {
        v: [n, n + 1, n + 2],
        nbr: [NONE; 3],
        alive: true,
    }];
    let mut free: Vec<usize> = Vec::new();
    let mut last = 0usize;

    let mut bad: Vec<usize> = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    let mut is_bad: Vec<bool> = vec![false];
    let mut boundary: Vec<(usize, usize, usize)> = Vec::new();
    let mut by_start: HashMap<usize, usize> = HashMap::new();
    let mut by_end: HashMap<usize, usize> = HashMap::new();

    for &pi in &insertion_order(points) {
        let p = pts[pi];
        let start = locate_walk(&tris, &pts, last, &p)
            .or_else(|| locate_brute(&tris, &pts, &p))
            .ok_or_else(|| PicarError::DegenerateDomain("point location failed".into()))?;

        // Cavity of triangles whose circumcircle strictly contains p.
        bad.clear();
        stack.clear();
        stack.push(start);
        is_bad[start] = true;
        while let Some(t) = stack.pop() {
            bad.push(t);
            for k in 0..3 {
                let nb = tris[t].nbr[k];
                if nb == NONE || is_bad[nb] {
                    continue;
                }
                let [a, b, c] = tris[nb].v;
                if in_circle(&pts[a], &pts[b], &pts[c], &p) > 0.0 {
                    is_bad[nb] = true;
                    stack.push(nb);
                }
            }
        }

        boundary.clear();
        for &t in &bad {
            let tri = tris[t];
            for k in 0..3 {
                let nb = tri.nbr[k];
                if nb == NONE || !is_bad[nb] {
                    boundary.push((tri.v[(k + 1) % 3], tri.v[(k + 2) % 3], nb));
                }
            }
        }
        for &t in &bad {
            is_bad[t] = false;
            tris[t].alive = false;
            free.push(t);
        }

        by_start.clear();
        by_end.clear();
        let mut created = Vec::with_capacity(boundary.len());
        for &(a, b, outer) in &boundary {
            let tri = Tri {
                v: [a, b, pi],
                nbr: [NONE, NONE, outer],
                alive: true,
            };
            let idx = if let Some(slot) = free.pop() {
                tris[slot] = tri;
                slot
            } else {
                tris.push(tri);
                is_bad.push(false);
                tris.len() - 1
            };
            if outer != NONE {
                let o = &mut tris[outer];
                for k in 0..3 {
                    let (oa, ob) = (o.v[(k + 1) % 3], o.v[(k + 2) % 3]);
                    if oa == b && ob == a {
                        o.nbr[k] = idx;
                    }
                }
            }
            by_start.insert(a, idx);
            by_end.insert(b, idx);
            created.push(idx);
        }
        for &idx in &created {
            let [a, b, _] = tris[idx].v;
            // Edge (b, p) is shared with the triangle starting at b,
            // edge (p, a) with the triangle ending at a.
            tris[idx].nbr[0] = *by_start.get(&b).unwrap_or(&NONE);
            tris[idx].nbr[1] = *by_end.get(&a).unwrap_or(&NONE);
        }
        last = *created.first().unwrap_or(&last);
    }

    let mut out: Vec<[usize; 3]> = tris
        .iter()
        .filter(|t| t.alive && t.v.iter().all(|&v| v < n))
        .map(|t| normalize_triangle(t.v))
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// Rotates a counter-clockwise triple so the smallest index comes first.
pub(crate) fn normalize_triangle(v: [usize; 3]) -> [usize; 3] {
    let k = (0..3).min_by_key(|&k| v[k]).unwrap_or(0);
    [v[k], v[(k + 1) % 3], v[(k + 2) % 3]]
}

fn has_non_collinear_triple(points: &[Point2]) -> bool {
    let a = points[0];
    let Some(b) = points.iter().skip(1).find(|p| p.x != a.x || p.y != a.y) else {
        return false;
    };
    points.iter().any(|c| orient(&a, b, c) != 0.0)
}

fn locate_walk(tris: &[Tri], pts: &[Point2], start: usize, p: &Point2) -> Option<usize> {
    let mut t = if tris[start].alive {
        start
    } else {
        tris.iter().position(|t| t.alive)?
    };
    let mut prev = NONE;
    for _ in 0..tris.len() {
        let tri = &tris[t];
        let mut moved = false;
        for k in 0..3 {
            let a = &pts[tri.v[(k + 1) % 3]];
            let b = &pts[tri.v[(k + 2) % 3]];
            if tri.nbr[k] != prev && orient(a, b, p) < 0.0 {
                if tri.nbr[k] == NONE {
                    return None;
                }
                prev = t;
                t = tri.nbr[k];
                moved = true;
                break;
            }
        }
        if !moved {
            // The edge we came through was skipped; confirm containment.
            let inside = (0..3).all(|k| {
                orient(&pts[tri.v[(k + 1) % 3]], &pts[tri.v[(k + 2) % 3]], p) >= 0.0
            });
            return inside.then_some(t);
        }
    }
    None
}

fn locate_brute(tris: &[Tri], pts: &[Point2], p: &Point2) -> Option<usize> {
    tris.iter().position(|tri| {
        tri.alive
            && (0..3).all(|k| {
                orient(&pts[tri.v[(k + 1) % 3]], &pts[tri.v[(k + 2) % 3]], p) >= 0.0
            })
    })
}
