mod common;

use common::{convex_hull_2d, exact_hull_distance_2d, random_expansion};
use mctm_core::basis::BasisExpansion;
use mctm_core::hull::{hull_augmentation, hull_distance, select_hull_points, write_selection_csv, HullPooling};
use mctm_core::rng;
use ndarray::{Array2, Array3};
use rand::Rng;

fn cloud(m: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut r = rng::stream(seed, "hull-test", &[]);
    (0..m).map(|_| (r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))).collect()
}

fn to_array(pts: &[(f64, f64)]) -> Array2<f64> {
    Array2::from_shape_fn((pts.len(), 2), |(i, k)| if k == 0 { pts[i].0 } else { pts[i].1 })
}

fn diam(pts: &[(f64, f64)]) -> f64 {
    let mut best: f64 = 0.0;
    for a in pts {
        for b in pts {
            best = best.max(((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt());
        }
    }
    best
}

#[test]
fn frank_wolfe_distance_tracks_exact_projection() {
    for seed in 0..40 {
        let pts = cloud(9, seed);
        let (set, q) = (&pts[..8], pts[8]);
        let q = (3.0 * q.0, 3.0 * q.1);
        let eps = 1e-3;
        let flat: Vec<f64> = set.iter().flat_map(|p| [p.0, p.1]).collect();
        let (dist, witness) = hull_distance(&[q.0, q.1], &flat, eps);
        let exact = exact_hull_distance_2d(q, set);
        let mut all = set.to_vec();
        all.push(q);
        assert!(dist >= exact - 1e-12, "upper bound violated");
        assert!(dist <= exact + eps * diam(&all), "seed {seed}: {dist} vs {exact}");
        // the witness lies in the hull
        assert!(exact_hull_distance_2d((witness[0], witness[1]), set) < 1e-9);
    }
}

#[test]
fn perpendicular_distance_to_segment_converges() {
    let (d, _) = hull_distance(&[0.5, 1.0], &[0.0, 0.0, 1.0, 0.0], 1e-4);
    assert!((d - 1.0).abs() < 1e-8);
}

#[test]
fn circle_is_covered_to_tolerance() {
    let pts: Vec<(f64, f64)> = (0..100)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / 100.0;
            (a.cos(), a.sin())
        })
        .collect();
    let eps = 0.05;
    let sel = select_hull_points(&to_array(&pts), 8, eps, 1).unwrap();
    assert!(sel.selected.len() <= 8);
    let chosen: Vec<(f64, f64)> = sel.selected.iter().map(|&(i, _)| pts[i]).collect();
    let worst = pts.iter().map(|&q| exact_hull_distance_2d(q, &chosen)).fold(0.0, f64::max);
    // eight points of a regular 100-gon leave sagitta 1 - cos(pi/8) ≈ 0.076
    assert!(worst <= 1.0 - (std::f64::consts::PI / 8.0).cos() + 1e-9 + eps * 2.0, "{worst}");
    let big = select_hull_points(&to_array(&pts), 100, eps, 1).unwrap();
    let chosen: Vec<(f64, f64)> = big.selected.iter().map(|&(i, _)| pts[i]).collect();
    let worst = pts.iter().map(|&q| exact_hull_distance_2d(q, &chosen)).fold(0.0, f64::max);
    assert!(worst <= eps * diam(&pts), "{worst}");
}

#[test]
fn selection_contains_every_vertex_and_nothing_inside() {
    for seed in 0..20 {
        let pts = cloud(200, 100 + seed);
        let vertices = convex_hull_2d(&pts);
        let sel = select_hull_points(&to_array(&pts), vertices.len() + 2, 1e-6, seed).unwrap();
        let chosen: Vec<usize> = sel.selected.iter().map(|p| p.0).collect();
        for v in &vertices {
            assert!(chosen.contains(v), "seed {seed}: vertex {v} missing from {chosen:?}");
        }
        for c in &chosen {
            assert!(vertices.contains(c), "seed {seed}: interior point {c} selected");
        }
    }
}

#[test]
fn every_selected_point_is_a_vertex_of_the_selection() {
    for seed in 0..10 {
        let pts = cloud(150, seed);
        let sel = select_hull_points(&to_array(&pts), 6, 1e-6, seed).unwrap();
        let chosen: Vec<(f64, f64)> = sel.selected.iter().map(|&(i, _)| pts[i]).collect();
        for s in 0..chosen.len() {
            let others: Vec<(f64, f64)> = chosen.iter().enumerate().filter(|(k, _)| *k != s).map(|(_, p)| *p).collect();
            assert!(exact_hull_distance_2d(chosen[s], &others) > 0.0, "seed {seed}");
        }
        let mut uniq = sel.selected.clone();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(uniq.len(), sel.selected.len());
    }
}

#[test]
fn residual_trace_is_monotone_and_coverage_improves() {
    let pts = cloud(400, 77);
    let arr = to_array(&pts);
    let sel = select_hull_points(&arr, 12, 1e-6, 5).unwrap();
    for w in sel.residuals.windows(2) {
        assert!(w[1] <= w[0] + 1e-12);
    }
    let mut prev = f64::INFINITY;
    for budget in 3..=12 {
        let s = select_hull_points(&arr, budget, 1e-6, 5).unwrap();
        let chosen: Vec<(f64, f64)> = s.selected.iter().map(|&(i, _)| pts[i]).collect();
        let worst = pts.iter().map(|&q| exact_hull_distance_2d(q, &chosen)).fold(0.0, f64::max);
        assert!(worst <= prev + 1e-12, "budget {budget}");
        prev = worst;
    }
}

#[test]
fn same_seed_same_selection() {
    let arr = to_array(&cloud(300, 3));
    assert_eq!(select_hull_points(&arr, 10, 1e-3, 9).unwrap(), select_hull_points(&arr, 10, 1e-3, 9).unwrap());
}

#[test]
fn augmentation_edge_cases() {
    let e = random_expansion(60, 2, 4, 2);
    assert!(hull_augmentation(&e, 0, 0.01, 0, HullPooling::Pooled).unwrap().observations.is_empty());
    for pooling in [HullPooling::Pooled, HullPooling::PerDimension] {
        let aug = hull_augmentation(&e, 10, 0.01, 0, pooling).unwrap();
        assert!(aug.observations.len() <= 10);
        let mut u = aug.observations.clone();
        u.sort_unstable();
        u.dedup();
        assert_eq!(u.len(), aug.observations.len());
    }
}

#[test]
fn one_dimension_pooling_is_the_plain_selection() {
    let e = random_expansion(80, 1, 5, 4);
    let aug = hull_augmentation(&e, 6, 0.02, 11, HullPooling::Pooled).unwrap();
    let rows = Array2::from_shape_vec((80, 5), e.deriv_slice().to_vec()).unwrap();
    let direct = select_hull_points(&rows, 6, 0.02, 11).unwrap();
    let direct_obs: Vec<usize> = direct.selected.iter().map(|p| p.0).collect();
    assert_eq!(aug.observations, direct_obs);
}

#[test]
fn duplicated_observations_appear_once() {
    let e = random_expansion(30, 2, 4, 6);
    let doubled: Vec<usize> = (0..30).chain(0..30).collect();
    let (b, d): (Array3<f64>, Array3<f64>) = {
        let s = e.subset(&doubled);
        (s.basis, s.deriv)
    };
    let e2 = BasisExpansion::from_arrays(b, d).unwrap();
    let aug = hull_augmentation(&e2, 12, 0.01, 1, HullPooling::Pooled).unwrap();
    let mut obs = aug.observations.clone();
    obs.sort_unstable();
    obs.dedup();
    assert_eq!(obs.len(), aug.observations.len());
}

#[test]
fn selection_csv_lists_steps() {
    let arr = to_array(&cloud(50, 8));
    let sel = select_hull_points(&arr, 5, 1e-3, 2).unwrap();
    let mut buf = Vec::new();
    write_selection_csv(&mut buf, &sel).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("step,observation,dimension,residual\n"));
    assert_eq!(text.lines().count(), sel.selected.len() + 1);
}
