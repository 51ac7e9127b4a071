mod common;

use std::collections::BTreeMap;

use adaincv::clusterer::PseudoLabeling;
use adaincv::memory::init_memory;
use adaincv::synthgen::{decode_features, encode_features, generate, generate_holdout, SynthSpec};
use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn random_labels(r: &mut rand_chacha::ChaCha8Rng, n: usize, k: usize) -> Vec<i64> {
    // Every cluster gets at least one member; the rest are random or outliers.
    let mut l: Vec<i64> = (0..n)
        .map(|i| if i < k { i as i64 } else { r.random_range(-1..k as i64) })
        .collect();
    l.shuffle(r);
    l
}

#[test]
fn centroids_match_group_by_oracle() {
    for seed in 0..100 {
        let mut r = rng(seed);
        let k = r.random_range(1..6);
        let n = r.random_range(k..40);
        let x = blobs(&mut r, n, 5, k, 0.3);
        let labels = random_labels(&mut r, n, k);
        let mem = init_memory(&x, &PseudoLabeling::from_labels(labels.clone()).unwrap(), 0.2, 0.05).unwrap();

        let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate().filter(|(_, l)| **l >= 0) {
            groups.entry(l).or_default().push(i);
        }
        for (&c, members) in &groups {
            let sum: Vec<f64> = (0..5).map(|d| csum(members.iter().map(|&i| x.row(i)[d]))).collect();
            let norm = ip(&sum, &sum).sqrt();
            for d in 0..5 {
                assert!((mem.centroids().row(c as usize)[d] - sum[d] / norm).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn centroids_do_not_depend_on_sample_order() {
    for seed in 0..50 {
        let mut r = rng(seed);
        let x = blobs(&mut r, 30, 6, 3, 0.3);
        let labels = random_labels(&mut r, 30, 3);
        let mut perm: Vec<usize> = (0..30).collect();
        perm.shuffle(&mut r);
        let xp = x.select_rows(&perm);
        let lp: Vec<i64> = perm.iter().map(|&i| labels[i]).collect();
        let a = init_memory(&x, &PseudoLabeling::from_labels(labels).unwrap(), 0.2, 0.05).unwrap();
        let b = init_memory(&xp, &PseudoLabeling::from_labels(lp).unwrap(), 0.2, 0.05).unwrap();
        for (u, v) in a.centroids().data().iter().zip(b.centroids().data()) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}

#[test]
fn generation_is_reproducible_and_seed_sensitive() {
    let spec = SynthSpec::default();
    assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    let other = generate(&SynthSpec {
        seed: 8,
        ..spec.clone()
    })
    .unwrap();
    assert_ne!(generate(&spec).unwrap().features, other.features);
    let train = generate(&spec).unwrap();
    let hold = generate_holdout(&spec).unwrap();
    assert_ne!(train.features, hold.features);
    assert_eq!(train.features.dim(), hold.features.dim());
}

#[test]
fn feature_file_round_trips_at_f32_precision() {
    let data = generate(&SynthSpec {
        n_identities: 5,
        samples_per_identity: 4,
        ..SynthSpec::default()
    })
    .unwrap();
    let labels: Vec<i64> = data.true_ids.iter().map(|&i| i as i64).collect();
    let bytes = encode_features(&data.features, Some(&labels)).unwrap();
    let (m, l) = decode_features(&bytes).unwrap();
    assert_eq!(l.unwrap(), labels);
    for (a, b) in m.data().iter().zip(data.features.data()) {
        assert_eq!(*a, *b as f32 as f64);
    }
    assert!(decode_features(&bytes[..bytes.len() - 1]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn momentum_update_keeps_unit_norm(seed in 0u64..100_000, m in 0.0f64..=1.0) {
        let mut r = rng(seed);
        let x = unit_matrix(&mut r, 4, 6);
        let lab = PseudoLabeling::from_labels(vec![0, 0, 1, 1]).unwrap();
        let mut mem = init_memory(&x, &lab, m, 0.05).unwrap();
        let s = unit_vec(&mut r, 6);
        mem.momentum_update(1, &s).unwrap();
        let c = mem.centroids().row(1);
        prop_assert!((ip(c, c) - 1.0).abs() < 1e-12);
        if m == 0.0 {
            for (a, b) in c.iter().zip(&s) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shapes_follow_the_spec(ids in 1usize..8, per in 1usize..6, id_dim in 1usize..10, extra in 0usize..6) {
        let spec = SynthSpec { n_identities: ids, samples_per_identity: per, identity_dim: id_dim, raw_dim: id_dim + extra, ..SynthSpec::default() };
        let d = generate(&spec).unwrap();
        prop_assert_eq!(d.len(), ids * per);
        prop_assert_eq!(d.features.dim(), id_dim + extra);
        prop_assert!(d.nuisance_tag.iter().all(|&t| (t as usize) < spec.n_tags));
    }
}
