mod common;

use adaincv::evalkit::{ari, cmc, mean_ap, nmi, RetrievalSplit};
use adaincv::numcore::EmbeddingMatrix;
use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

const KS: [usize; 4] = [1, 5, 10, 20];

#[test]
fn map_and_cmc_match_brute_force() {
    for seed in 0..60 {
        let (q, qid, g, gid) = random_split(seed, 30, 120, 12, 8);
        let (want_map, want_cmc) = oracle_map_cmc(&q, &qid, &g, &gid, &KS);
        let split = RetrievalSplit::new(q, qid, g, gid);
        assert!((mean_ap(&split).unwrap() - want_map).abs() < 1e-12);
        for (a, b) in cmc(&split, &KS).unwrap().iter().zip(&want_cmc) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn tied_scores_break_by_gallery_index() {
    // Quantized 2-D directions produce many exact ties.
    let mut r = rng(3);
    let angles = [0.0f64, 0.5, 1.0];
    let mk = |n: usize, r: &mut rand_chacha::ChaCha8Rng| {
        let a: Vec<f64> = (0..n).map(|_| angles[r.random_range(0..3)]).collect();
        let rows: Vec<Vec<f64>> = a.iter().map(|t| vec![t.cos(), t.sin()]).collect();
        EmbeddingMatrix::from_unit_rows(2, &rows).unwrap()
    };
    let q = mk(10, &mut r);
    let g = mk(40, &mut r);
    let qid: Vec<i64> = (0..10).map(|_| r.random_range(0..3)).collect();
    let gid: Vec<i64> = (0..40).map(|j| if j < 3 { j } else { r.random_range(0..3) }).collect();
    let (want, want_cmc) = oracle_map_cmc(&q, &qid, &g, &gid, &KS);
    let split = RetrievalSplit::new(q, qid, g, gid);
    assert!((mean_ap(&split).unwrap() - want).abs() < 1e-12);
    assert_eq!(cmc(&split, &KS).unwrap(), want_cmc);
}

#[test]
fn gallery_order_is_irrelevant_without_ties() {
    for seed in 0..30 {
        let (q, qid, g, gid) = random_split(seed, 20, 80, 8, 8);
        let mut perm: Vec<usize> = (0..g.rows()).collect();
        perm.shuffle(&mut rng(seed + 99));
        let gp = g.select_rows(&perm);
        let gidp: Vec<i64> = perm.iter().map(|&i| gid[i]).collect();
        let a = RetrievalSplit::new(q.clone(), qid.clone(), g, gid);
        let b = RetrievalSplit::new(q, qid, gp, gidp);
        assert!((mean_ap(&a).unwrap() - mean_ap(&b).unwrap()).abs() < 1e-12);
        assert_eq!(cmc(&a, &KS).unwrap(), cmc(&b, &KS).unwrap());
    }
}

#[test]
fn perfect_prefix_gives_unit_scores() {
    // Each query's matches are exactly its own direction; others are orthogonal.
    let eye = |i: usize| {
        let mut v = vec![0.0; 4];
        v[i] = 1.0;
        v
    };
    let q = EmbeddingMatrix::from_unit_rows(4, &[eye(0), eye(1)]).unwrap();
    let g = EmbeddingMatrix::from_unit_rows(4, &[eye(2), eye(0), eye(1), eye(0), eye(3)]).unwrap();
    let split = RetrievalSplit::new(q, vec![0, 1], g, vec![2, 0, 1, 0, 3]);
    assert_eq!(mean_ap(&split).unwrap(), 1.0);
    assert_eq!(cmc(&split, &[1]).unwrap(), vec![1.0]);
}

#[test]
fn agreement_scores_match_contingency_oracle() {
    for seed in 0..200 {
        let mut r = rng(seed);
        let n = r.random_range(2..80);
        let (ka, kb) = (r.random_range(1..8), r.random_range(1..8));
        let a: Vec<i64> = (0..n).map(|_| r.random_range(-1..ka)).collect();
        let b: Vec<i64> = (0..n).map(|_| r.random_range(0..kb)).collect();
        assert!((ari(&a, &b).unwrap() - oracle_ari(&a, &b)).abs() < 1e-9, "seed {seed}");
        assert!(
            (nmi(&a, &b).unwrap() - oracle_nmi(&a, &b).clamp(0.0, 1.0)).abs() < 1e-9,
            "seed {seed}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn cmc_is_monotone_and_bounded(seed in 0u64..100_000) {
        let (q, qid, g, gid) = random_split(seed, 15, 60, 6, 6);
        let split = RetrievalSplit::new(q, qid, g, gid);
        let c = cmc(&split, &[1, 2, 3, 5, 10, 60]).unwrap();
        prop_assert!(c.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(c[c.len() - 1], 1.0);
        let m = mean_ap(&split).unwrap();
        prop_assert!(m > 0.0 && m <= 1.0);
    }

    #[test]
    fn agreement_is_symmetric(seed in 0u64..100_000) {
        let mut r = rng(seed);
        let a: Vec<i64> = (0..40).map(|_| r.random_range(-1..4)).collect();
        let b: Vec<i64> = (0..40).map(|_| r.random_range(-1..4)).collect();
        prop_assert!((ari(&a, &b).unwrap() - ari(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((nmi(&a, &b).unwrap() - nmi(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((ari(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }
}
