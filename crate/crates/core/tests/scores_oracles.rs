mod common;

use approx::assert_relative_eq;
use common::{arbitrary_expansion, explicit_block_leverage, random_expansion};
use mctm_core::basis::BasisExpansion;
use mctm_core::scores::{leverage_scores, sampling_probabilities, sketched_leverage, LeverageMethod, ScoreMethod};
use ndarray::{array, Array3};

#[test]
fn block_structure_collapses_to_one_score_per_observation() {
    for seed in 0..3 {
        let e = random_expansion(20, 3, 4, seed);
        let ours = leverage_scores(&e, LeverageMethod::Exact).unwrap();
        let oracle = explicit_block_leverage(&e);
        assert_eq!(oracle.len(), 60);
        for i in 0..20 {
            for j in 0..3 {
                assert!(
                    (ours.u[i] - oracle[i * 3 + j]).abs() < 1e-10,
                    "obs {i} dim {j}: {} vs {}",
                    ours.u[i],
                    oracle[i * 3 + j]
                );
            }
        }
    }
}

#[test]
fn scores_sum_to_rank() {
    for seed in 0..5 {
        let e = random_expansion(50, 2, 5, seed);
        let s = leverage_scores(&e, LeverageMethod::Exact).unwrap();
        // partition of unity ties the blocks together: rank dJ - (J - 1)
        assert_eq!(s.rank, 2 * 5 - 1);
        assert_relative_eq!(s.u.iter().sum::<f64>(), s.rank as f64, epsilon = 1e-6);
        assert!(s.u.iter().all(|u| (0.0..=1.0).contains(u)));
    }
}

#[test]
fn identity_and_repeated_rows() {
    let id = BasisExpansion::from_arrays(array![[[1.0, 0.0]], [[0.0, 1.0]]], Array3::zeros((2, 1, 2))).unwrap();
    assert_eq!(leverage_scores(&id, LeverageMethod::Exact).unwrap().u, vec![1.0, 1.0]);
    let rep = BasisExpansion::from_arrays(
        Array3::from_shape_fn((8, 1, 3), |(_, _, k)| k as f64 + 1.0),
        Array3::zeros((8, 1, 3)),
    )
    .unwrap();
    let s = leverage_scores(&rep, LeverageMethod::Exact).unwrap();
    assert_eq!(s.rank, 1);
    for u in s.u {
        assert_relative_eq!(u, 0.125, epsilon = 1e-12);
    }
}

#[test]
fn all_zero_matrix_is_rejected() {
    let z = BasisExpansion::from_arrays(Array3::zeros((4, 1, 2)), Array3::zeros((4, 1, 2))).unwrap();
    assert!(leverage_scores(&z, LeverageMethod::Exact).is_err());
}

#[test]
fn permutation_equivariance() {
    let e = arbitrary_expansion(30, 2, 3, 4);
    let perm: Vec<usize> = (0..30).rev().collect();
    let base = leverage_scores(&e, LeverageMethod::Exact).unwrap().u;
    let permuted = leverage_scores(&e.subset(&perm), LeverageMethod::Exact).unwrap().u;
    for (k, &i) in perm.iter().enumerate() {
        assert_relative_eq!(permuted[k], base[i], epsilon = 1e-12);
    }
}

#[test]
fn upweighting_a_row_raises_it_and_lowers_the_rest() {
    let e = arbitrary_expansion(40, 2, 3, 9);
    let base = leverage_scores(&e, LeverageMethod::Exact).unwrap().u;
    let (mut b, d) = (e.basis.clone(), e.deriv.clone());
    b.slice_mut(ndarray::s![7, .., ..]).mapv_inplace(|v| v * 5.0);
    let scaled = leverage_scores(&BasisExpansion::from_arrays(b, d).unwrap(), LeverageMethod::Exact).unwrap().u;
    assert!(scaled[7] > base[7]);
    for i in (0..40).filter(|&i| i != 7) {
        assert!(scaled[i] <= base[i] + 1e-12, "row {i}");
    }
}

#[test]
fn sketch_without_compression_is_exact() {
    let e = random_expansion(120, 2, 4, 6);
    let exact = leverage_scores(&e, LeverageMethod::Exact).unwrap();
    let full = sketched_leverage(&e, 120, 1).unwrap();
    assert_eq!(full.method, ScoreMethod::Sketched);
    for (a, b) in exact.u.iter().zip(&full.u) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn compressed_sketch_stays_within_factor_two() {
    let mut good = 0;
    let e = random_expansion(4000, 2, 4, 12);
    let exact = leverage_scores(&e, LeverageMethod::Exact).unwrap();
    for seed in 0..10 {
        let s = sketched_leverage(&e, 600, seed).unwrap();
        assert_eq!(s, sketched_leverage(&e, 600, seed).unwrap());
        if exact.u.iter().zip(&s.u).all(|(a, b)| *b >= 0.5 * a && *b <= 2.0 * a) {
            good += 1;
        }
    }
    assert!(good >= 9, "{good}/10 sketches within factor two");
}

#[test]
fn undersized_sketch_is_rejected() {
    let e = random_expansion(50, 2, 4, 1);
    assert!(sketched_leverage(&e, 7, 0).is_err());
}

#[test]
fn probability_examples() {
    let p = sampling_probabilities(&[1.0, 1.0]);
    assert_eq!(p.s, vec![1.5, 1.5]);
    assert_eq!(p.p, vec![0.5, 0.5]);
    let p = sampling_probabilities(&[1.0, 0.0, 0.0, 0.0]);
    let want = [1.25 / 2.0, 0.25 / 2.0, 0.25 / 2.0, 0.25 / 2.0];
    for (a, b) in p.p.iter().zip(want) {
        assert_relative_eq!(*a, b, epsilon = 1e-15);
    }
}
