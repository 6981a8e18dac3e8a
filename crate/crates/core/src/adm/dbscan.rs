//! Plain DBSCAN over small point sets.
//!
//! A point's neighbourhood includes the point itself, so `min_pts = 4`
//! means "three other points within `eps`". Points are visited in index
//! order, which makes border-point assignment deterministic.

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Neighbour lists via a sweep over points sorted by their first coordinate.
pub fn neighbourhoods(points: &[Vec<f64>], eps: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]).then(a.cmp(&b)));
    let eps2 = eps * eps;
    let mut out = vec![Vec::new(); n];
    for (pos, &i) in order.iter().enumerate() {
        out[i].push(i);
        for &j in &order[pos + 1..] {
            if points[j][0] - points[i][0] > eps {
                break;
            }
            if dist2(&points[i], &points[j]) <= eps2 {
                out[i].push(j);
                out[j].push(i);
            }
        }
    }
    for nb in &mut out {
        nb.sort_unstable();
    }
    out
}

/// Cluster label per point; `None` marks noise.
pub fn dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let nbrs = neighbourhoods(points, eps);
    let core: Vec<bool> = nbrs.iter().map(|nb| nb.len() >= min_pts).collect();
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if label[start].is_some() || !core[start] {
            continue;
        }
        label[start] = Some(next);
        stack.push(start);
        while let Some(p) = stack.pop() {
            for &q in &nbrs[p] {
                if label[q].is_none() {
                    label[q] = Some(next);
                    if core[q] {
                        stack.push(q);
                    }
                }
            }
        }
        next += 1;
    }
    label
}

/// Groups labelled points into clusters (in label order).
pub fn clusters_from_labels(points: &[Vec<f64>], labels: &[Option<usize>]) -> Vec<Vec<Vec<f64>>> {
    let k = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); k];
    for (p, l) in points.iter().zip(labels) {
        if let Some(c) = l {
            out[*c].push(p.clone());
        }
    }
    out
}
