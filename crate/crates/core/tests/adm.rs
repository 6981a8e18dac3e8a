mod common;

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gridfdi_core::adm::dbscan::dbscan;
use gridfdi_core::adm::{hull_from_points, train_dbscan, AdmConfig, AdmModel, ClusterHull};
use gridfdi_core::harness::{Overrides, Prepared};
use gridfdi_core::ingest::synth_load;
use gridfdi_core::par::Execution;

use common::{fixed, in_convex_combination_2d, orient};

const SCENARIO: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/desk3.json");

/// Textbook DBSCAN: core points by direct count, clusters as connected
/// components of the core graph, borders attached to any adjacent core.
fn reference_dbscan(pts: &[Vec<f64>], eps: f64, min_pts: usize) -> (Vec<BTreeSet<usize>>, Vec<bool>, Vec<Vec<usize>>) {
    let n = pts.len();
    let near = |a: usize, b: usize| pts[a].iter().zip(&pts[b]).map(|(x, y)| (x - y).powi(2)).sum::<f64>() <= eps * eps;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();
    let mut comp = vec![usize::MAX; n];
    let mut components = Vec::new();
    for s in 0..n {
        if !core[s] || comp[s] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut members = BTreeSet::new();
        let mut todo = vec![s];
        comp[s] = id;
        while let Some(p) = todo.pop() {
            members.insert(p);
            for q in 0..n {
                if core[q] && comp[q] == usize::MAX && near(p, q) {
                    comp[q] = id;
                    todo.push(q);
                }
            }
        }
        components.push(members);
    }
    // Clusters a non-core point may legitimately join.
    let options: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut c: Vec<usize> = (0..n).filter(|&j| core[j] && near(i, j)).map(|j| comp[j]).collect();
            c.sort_unstable();
            c.dedup();
            c
        })
        .collect();
    (components, core, options)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dbscan_matches_reference(raw in prop::collection::vec((0i32..40, 0i32..40), 1..120), min_pts in 1usize..6) {
        // Integer grid and a non-integer radius keep distance ties away.
        let pts: Vec<Vec<f64>> = raw.iter().map(|&(a, b)| vec![a as f64, b as f64]).collect();
        let eps = 2.5;
        let labels = dbscan(&pts, eps, min_pts);
        let (components, core, options) = reference_dbscan(&pts, eps, min_pts);
        // Core points: same partition.
        for comp in &components {
            let l: BTreeSet<_> = comp.iter().map(|&i| labels[i]).collect();
            prop_assert_eq!(l.len(), 1);
            prop_assert!(l.iter().next().unwrap().is_some());
        }
        let distinct: BTreeSet<_> = components.iter().map(|c| labels[*c.iter().next().unwrap()]).collect();
        prop_assert_eq!(distinct.len(), components.len());
        // Non-core points: noise exactly when no core is in range, else one
        // of the neighbouring clusters.
        for i in 0..pts.len() {
            if core[i] {
                continue;
            }
            match labels[i] {
                None => prop_assert!(options[i].is_empty()),
                Some(l) => {
                    let allowed: BTreeSet<_> = options[i].iter().map(|&c| labels[*components[c].iter().next().unwrap()]).collect();
                    prop_assert!(allowed.contains(&Some(l)));
                }
            }
        }
    }
}

fn check_hull_2d(hull: &ClusterHull, training: &[Vec<f64>], rng: &mut ChaCha8Rng) {
    for p in training {
        assert!(hull.contains(p), "training point {p:?} outside its hull");
    }
    let verts: Vec<[i128; 2]> = hull.vertices.iter().map(|v| [fixed(v[0]), fixed(v[1])]).collect();
    // Vertices are anticlockwise and strictly convex.
    let n = verts.len();
    for i in 0..n {
        assert!(orient(verts[i], verts[(i + 1) % n], verts[(i + 2) % n]) > 0);
    }
    let (lo, hi) = hull.vertices.iter().fold(([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]), |(lo, hi), v| {
        ([lo[0].min(v[0]), lo[1].min(v[1])], [hi[0].max(v[0]), hi[1].max(v[1])])
    });
    let pad = [(hi[0] - lo[0]) * 0.2 + 1e-3, (hi[1] - lo[1]) * 0.2 + 1e-3];
    let mut inside = 0;
    for _ in 0..1000 {
        // Sample on the 2^-40 grid so the exact oracle sees the same point.
        let q = |x: f64| (x * (1u64 << 40) as f64).round() / (1u64 << 40) as f64;
        let p = [
            q(rng.random_range(lo[0] - pad[0]..hi[0] + pad[0])),
            q(rng.random_range(lo[1] - pad[1]..hi[1] + pad[1])),
        ];
        let exact = in_convex_combination_2d(&verts, [fixed(p[0]), fixed(p[1])]);
        assert_eq!(hull.contains(&p), exact, "point {p:?}");
        inside += exact as usize;
    }
    assert!(inside > 0);
}

#[test]
fn trained_hulls_agree_with_convex_combination_oracle() {
    let prep = Prepared::load(SCENARIO, &Overrides::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = prep.scenario.detector.adm;
    for (bus, series) in prep.network.bus_ids().zip(&prep.training) {
        let clusters = train_dbscan(series, cfg.eps, cfg.min_pts, cfg.lookback).unwrap();
        let hulls = prep.adm.hulls(bus);
        assert_eq!(hulls.len(), clusters.len());
        for (hull, cluster) in hulls.iter().zip(&clusters) {
            check_hull_2d(hull, cluster, &mut rng);
        }
    }
}

#[test]
fn fragmented_training_yields_several_valid_hulls() {
    let series = synth_load(1.5, 0.3, 0.003, 144 * 7, 11).values;
    let model = AdmModel::train(std::slice::from_ref(&series), AdmConfig::default(), Execution::Sequential).unwrap();
    let clusters = train_dbscan(&series, 0.01, 4, 1).unwrap();
    let hulls = model.hulls(gridfdi_core::grid_model::BusId(1));
    assert!(hulls.len() > 1);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (hull, cluster) in hulls.iter().zip(&clusters) {
        check_hull_2d(hull, cluster, &mut rng);
    }
}

fn big(v: f64) -> BigInt {
    BigInt::from(fixed(v))
}

fn det3(m: [[BigInt; 3]; 3]) -> BigInt {
    &m[0][0] * (&m[1][1] * &m[2][2] - &m[1][2] * &m[2][1]) - &m[0][1] * (&m[1][0] * &m[2][2] - &m[1][2] * &m[2][0])
        + &m[0][2] * (&m[1][0] * &m[2][1] - &m[1][1] * &m[2][0])
}

fn orient3(a: &[BigInt; 3], b: &[BigInt; 3], c: &[BigInt; 3], d: &[BigInt; 3]) -> BigInt {
    let row = |p: &[BigInt; 3]| [&p[0] - &a[0], &p[1] - &a[1], &p[2] - &a[2]];
    det3([row(b), row(c), row(d)])
}

fn in_convex_combination_3d(verts: &[[BigInt; 3]], p: &[BigInt; 3]) -> bool {
    let n = verts.len();
    let sign = |x: &BigInt| if x.is_zero() { 0 } else if x.is_positive() { 1 } else { -1 };
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                for l in k + 1..n {
                    let (a, b, c, d) = (&verts[i], &verts[j], &verts[k], &verts[l]);
                    let vol = sign(&orient3(a, b, c, d));
                    if vol == 0 {
                        continue;
                    }
                    let faces = [
                        sign(&orient3(p, b, c, d)),
                        sign(&orient3(a, p, c, d)),
                        sign(&orient3(a, b, p, d)),
                        sign(&orient3(a, b, c, p)),
                    ];
                    if faces.iter().all(|&s| s == 0 || s == vol) {
                        return true;
                    }
                }
            }
        }
    }
    false
}

#[test]
fn three_dimensional_hull_agrees_with_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let q = |x: f64| (x * (1u64 << 30) as f64).round() / (1u64 << 30) as f64;
    let cloud: Vec<Vec<f64>> = (0..40)
        .map(|_| (0..3).map(|_| q(1.0 + rng.random_range(-0.1..0.1))).collect())
        .collect();
    let hull = hull_from_points(&cloud, 1e-6).unwrap();
    for p in &cloud {
        assert!(hull.contains(p));
    }
    // Every vertex is one of the input points.
    for v in &hull.vertices {
        assert!(cloud.contains(v));
    }
    let verts: Vec<[BigInt; 3]> = hull.vertices.iter().map(|v| [big(v[0]), big(v[1]), big(v[2])]).collect();
    for _ in 0..1000 {
        let p: Vec<f64> = (0..3).map(|_| q(1.0 + rng.random_range(-0.12..0.12))).collect();
        let exact = in_convex_combination_3d(&verts, &[big(p[0]), big(p[1]), big(p[2])]);
        assert_eq!(hull.contains(&p), exact, "point {p:?}");
    }
}

#[test]
fn model_file_round_trip_keeps_verdicts() {
    let prep = Prepared::load(SCENARIO, &Overrides::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("adm.json");
    prep.adm.save(&path).unwrap();
    let back = AdmModel::load(&path).unwrap();
    assert_eq!(back, *prep.adm);
    let w = [prep.operating[0], prep.operating[0] + 0.2];
    let bus = gridfdi_core::grid_model::BusId(1);
    assert_eq!(back.is_benign(bus, &w), prep.adm.is_benign(bus, &w));
    assert!(!back.is_benign(bus, &w));
    assert!(back.is_benign(bus, &[prep.operating[0], prep.operating[0]]));
}
