//! Convex hulls in half-space form.
//!
//! A hull row `alpha` of length d+1 describes `alpha[..d]·x + alpha[d] <= 0`.
//! In 2-D the vertices are anticlockwise and row i belongs to the edge from
//! vertex i to vertex i+1; rows are scaled to unit normals.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::AdmError;

/// Tolerance used for membership tests.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterHull {
    pub vertices: Vec<Vec<f64>>,
    pub hyperplanes: Vec<Vec<f64>>,
}

impl ClusterHull {
    pub fn dim(&self) -> usize {
        self.vertices.first().map_or(0, |v| v.len())
    }

    /// Largest row value `alpha·x + alpha_0`; <= 0 means inside.
    pub fn margin(&self, p: &[f64]) -> f64 {
        self.hyperplanes
            .iter()
            .map(|a| a[..p.len()].iter().zip(p).map(|(c, x)| c * x).sum::<f64>() + a[p.len()])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.margin(p) <= MEMBERSHIP_TOL
    }
}

fn cross(o: &[f64; 2], a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain; anticlockwise, collinear points dropped,
/// starting at the lowest-x (then lowest-y) point.
pub fn monotone_chain(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn edge_rows(vertices: &[[f64; 2]]) -> Vec<Vec<f64>> {
    let n = vertices.len();
    (0..n)
        .map(|i| {
            let [x0, y0] = vertices[i];
            let [x1, y1] = vertices[(i + 1) % n];
            let (dx, dy) = (x1 - x0, y1 - y0);
            let len = dx.hypot(dy);
            vec![dy / len, -dx / len, (dx * y0 - dy * x0) / len]
        })
        .collect()
}

fn box_corners(points: &[Vec<f64>], tau: f64) -> Vec<Vec<f64>> {
    let d = points.first().map_or(0, |p| p.len());
    let mut out = Vec::with_capacity(points.len() << d);
    for p in points {
        for mask in 0..(1usize << d) {
            out.push(
                p.iter()
                    .enumerate()
                    .map(|(i, v)| if (mask >> i) & 1 == 1 { v + tau } else { v - tau })
                    .collect(),
            );
        }
    }
    out
}

/// Hull of `points`; clusters that span less than full dimension are
/// thickened by `tau` in every coordinate first.
pub fn hull_from_points(points: &[Vec<f64>], tau: f64) -> Result<ClusterHull, AdmError> {
    let Some(first) = points.first() else {
        return Err(AdmError::DegenerateCluster("empty cluster".into()));
    };
    let d = first.len();
    if d == 0 || points.iter().any(|p| p.len() != d) {
        return Err(AdmError::DegenerateCluster("inconsistent point dimension".into()));
    }
    if d == 1 {
        let lo = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if hi - lo <= 0.0 { (lo - tau, hi + tau) } else { (lo, hi) };
        return Ok(ClusterHull {
            vertices: vec![vec![lo], vec![hi]],
            hyperplanes: vec![vec![-1.0, lo], vec![1.0, -hi]],
        });
    }
    if d == 2 {
        let pts: Vec<[f64; 2]> = points.iter().map(|p| [p[0], p[1]]).collect();
        let mut hull = monotone_chain(&pts);
        if hull.len() < 3 {
            let thick: Vec<[f64; 2]> = box_corners(
                &hull.iter().map(|p| p.to_vec()).collect::<Vec<_>>(),
                tau,
            )
            .into_iter()
            .map(|p| [p[0], p[1]])
            .collect();
            hull = monotone_chain(&thick);
        }
        return Ok(ClusterHull {
            hyperplanes: edge_rows(&hull),
            vertices: hull.iter().map(|p| p.to_vec()).collect(),
        });
    }
    match incremental_hull(points) {
        Some(h) => Ok(h),
        None => incremental_hull(&box_corners(points, tau))
            .ok_or_else(|| AdmError::DegenerateCluster("hull construction failed".into())),
    }
}

struct Facet {
    verts: Vec<usize>,
    normal: Vec<f64>,
    offset: f64,
}

fn plane_through(points: &[Vec<f64>], verts: &[usize], interior: &[f64]) -> Option<(Vec<f64>, f64)> {
    let d = interior.len();
    let p0 = &points[verts[0]];
    let diffs: Vec<Vec<f64>> = verts[1..]
        .iter()
        .map(|&v| points[v].iter().zip(p0).map(|(a, b)| a - b).collect())
        .collect();
    // Generalized cross product via cofactors.
    let mut normal = vec![0.0; d];
    for (j, nj) in normal.iter_mut().enumerate() {
        let m = DMatrix::from_fn(d - 1, d - 1, |r, c| diffs[r][if c < j { c } else { c + 1 }]);
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        *nj = sign * m.determinant();
    }
    let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-300 {
        return None;
    }
    for v in &mut normal {
        *v /= norm;
    }
    let mut offset: f64 = normal.iter().zip(p0).map(|(a, b)| a * b).sum();
    let side: f64 = normal.iter().zip(interior).map(|(a, b)| a * b).sum::<f64>() - offset;
    if side > 0.0 {
        for v in &mut normal {
            *v = -*v;
        }
        offset = -offset;
    }
    Some((normal, offset))
}

/// Beneath-beyond hull for d >= 2; `None` when the points do not span
/// full dimension.
pub fn incremental_hull(points: &[Vec<f64>]) -> Option<ClusterHull> {
    let d = points.first()?.len();
    let scale = points
        .iter()
        .flat_map(|p| p.iter())
        .fold(1.0_f64, |m, v| m.max(v.abs()));
    let tol = 1e-10 * scale;

    // Initial simplex by greedy distance to the current affine span.
    let mut simplex = vec![0usize];
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while simplex.len() < d + 1 {
        let p0 = &points[simplex[0]];
        let mut best = (0usize, 0.0_f64);
        for (i, p) in points.iter().enumerate() {
            let mut r: Vec<f64> = p.iter().zip(p0).map(|(a, b)| a - b).collect();
            for b in &basis {
                let c: f64 = r.iter().zip(b).map(|(x, y)| x * y).sum();
                for (ri, bi) in r.iter_mut().zip(b) {
                    *ri -= c * bi;
                }
            }
            let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > best.1 {
                best = (i, n);
            }
        }
        if best.1 <= tol * 10.0 {
            return None;
        }
        let p = &points[best.0];
        let mut r: Vec<f64> = p.iter().zip(p0).map(|(a, b)| a - b).collect();
        for b in &basis {
            let c: f64 = r.iter().zip(b).map(|(x, y)| x * y).sum();
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri -= c * bi;
            }
        }
        for v in &mut r {
            *v /= best.1;
        }
        basis.push(r);
        simplex.push(best.0);
    }
    let interior: Vec<f64> = (0..d)
        .map(|k| simplex.iter().map(|&i| points[i][k]).sum::<f64>() / (d + 1) as f64)
        .collect();
    let mut facets: Vec<Facet> = Vec::new();
    for skip in 0..=d {
        let verts: Vec<usize> = simplex.iter().enumerate().filter(|(k, _)| *k != skip).map(|(_, &v)| v).collect();
        let (normal, offset) = plane_through(points, &verts, &interior)?;
        facets.push(Facet { verts, normal, offset });
    }
    for (i, p) in points.iter().enumerate() {
        if simplex.contains(&i) {
            continue;
        }
        let visible: Vec<usize> = facets
            .iter()
            .enumerate()
            .filter(|(_, f)| f.normal.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() - f.offset > tol)
            .map(|(k, _)| k)
            .collect();
        if visible.is_empty() {
            continue;
        }
        let mut ridges: HashMap<Vec<usize>, usize> = HashMap::new();
        for &k in &visible {
            let f = &facets[k];
            for skip in 0..f.verts.len() {
                let mut r: Vec<usize> = f.verts.iter().enumerate().filter(|(j, _)| *j != skip).map(|(_, &v)| v).collect();
                r.sort_unstable();
                *ridges.entry(r).or_insert(0) += 1;
            }
        }
        let mut horizon: Vec<Vec<usize>> = ridges.into_iter().filter(|(_, c)| *c == 1).map(|(r, _)| r).collect();
        horizon.sort();
        let mut keep: Vec<Facet> = facets
            .into_iter()
            .enumerate()
            .filter(|(k, _)| !visible.contains(k))
            .map(|(_, f)| f)
            .collect();
        for mut r in horizon {
            r.push(i);
            if let Some((normal, offset)) = plane_through(points, &r, &interior) {
                keep.push(Facet { verts: r, normal, offset });
            }
        }
        facets = keep;
    }
    let mut used: Vec<usize> = facets.iter().flat_map(|f| f.verts.iter().copied()).collect();
    used.sort_unstable();
    used.dedup();
    Some(ClusterHull {
        vertices: used.iter().map(|&i| points[i].clone()).collect(),
        hyperplanes: facets
            .iter()
            .map(|f| {
                let mut row = f.normal.clone();
                row.push(-f.offset);
                row
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]];
        let h = hull_from_points(&pts, 1e-6).unwrap();
        assert_eq!(h.hyperplanes.len(), 4);
        assert!(h.contains(&[0.5, 0.5]));
        assert!(!h.contains(&[2.0, 2.0]));
    }

    #[test]
    fn triangle_is_anticlockwise() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.2, 0.2]];
        let h = hull_from_points(&pts, 1e-6).unwrap();
        assert_eq!(h.vertices.len(), 3);
        assert_eq!(h.hyperplanes.len(), 3);
        let v = &h.vertices;
        let area2: f64 = (0..3)
            .map(|i| v[i][0] * v[(i + 1) % 3][1] - v[(i + 1) % 3][0] * v[i][1])
            .sum();
        assert!(area2 > 0.0);
        assert!(h.contains(&[0.25, 0.25]));
        for vert in v {
            assert!(h.margin(vert) <= 1e-9);
        }
    }

    #[test]
    fn single_point_is_thickened() {
        let pts = vec![vec![2.0, 2.0]; 5];
        let h = hull_from_points(&pts, 1e-6).unwrap();
        assert!(h.contains(&[2.0, 2.0]));
        assert!(h.contains(&[2.0 + 5e-7, 2.0 - 5e-7]));
        assert!(!h.contains(&[2.0 + 1e-5, 2.0]));
    }

    #[test]
    fn collinear_is_thickened() {
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, i as f64]).collect();
        let h = hull_from_points(&pts, 1e-6).unwrap();
        assert!(h.contains(&[2.5, 2.5]));
        assert!(!h.contains(&[2.5, 2.6]));
    }

    #[test]
    fn cube_hull_3d() {
        let mut pts = Vec::new();
        for m in 0..8 {
            pts.push(vec![(m & 1) as f64, ((m >> 1) & 1) as f64, ((m >> 2) & 1) as f64]);
        }
        pts.push(vec![0.5, 0.5, 0.5]);
        let h = hull_from_points(&pts, 1e-6).unwrap();
        assert_eq!(h.vertices.len(), 8);
        assert!(h.contains(&[0.5, 0.2, 0.9]));
        assert!(!h.contains(&[1.1, 0.5, 0.5]));
        for v in &h.vertices {
            assert!(h.margin(v) <= 1e-9);
        }
    }
}
