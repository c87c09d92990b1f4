mod common;

use common::{naive_top_r, random_labels, random_set};
use dmlprobe::knn::{blocked_neighbor_pass, top_r};
use dmlprobe::retrieval::{nr_precision, r_precision, RetrievalOptions};
use dmlprobe::{EmbeddingSet, MetricKind};
use proptest::prelude::*;

#[test]
fn top_r_matches_full_sort_for_every_metric() {
    for (s, metric) in MetricKind::ALL.into_iter().enumerate() {
        let set = random_set(100 + s as u64, 500, 16, metric, 0);
        for q in 0..set.len() {
            assert_eq!(
                top_r(&set, q, 50).unwrap().neighbor_indices,
                naive_top_r(&set, q, 50),
                "{metric} query {q}"
            );
        }
    }
}

#[test]
fn blocked_pass_matches_top_r() {
    for (s, metric) in MetricKind::ALL.into_iter().enumerate() {
        let set = random_set(200 + s as u64, 500, 16, metric, 5);
        let blocked = blocked_neighbor_pass(&set, 40, 64).unwrap();
        assert_eq!(blocked.len(), 500);
        for (q, list) in blocked.iter().enumerate() {
            assert_eq!(list.query_index, q);
            assert_eq!(list, &top_r(&set, q, 40).unwrap(), "{metric} query {q}");
        }
    }
}

#[test]
fn blocked_pass_independent_of_block_size() {
    let set = random_set(7, 500, 16, MetricKind::SquaredEuclidean, 3);
    let reference = blocked_neighbor_pass(&set, 25, 1000).unwrap();
    for block in [1, 7, 64, 499, 500] {
        assert_eq!(blocked_neighbor_pass(&set, 25, block).unwrap(), reference, "block {block}");
    }
}

#[test]
fn full_retrieval_returns_everyone_else() {
    let set = random_set(8, 30, 4, MetricKind::CosineSimilarity, 2);
    for list in blocked_neighbor_pass(&set, 29, 8).unwrap() {
        let mut idx = list.neighbor_indices.clone();
        idx.sort_unstable();
        let expected: Vec<usize> = (0..30).filter(|&i| i != list.query_index).collect();
        assert_eq!(idx, expected);
    }
}

#[test]
fn random_retrieval_with_two_balanced_labels_is_half() {
    let set = random_set(11, 2000, 8, MetricKind::Euclidean, 0);
    let labels: Vec<String> = (0..2000).map(|i| if i % 2 == 0 { "a" } else { "b" }.into()).collect();
    let r = r_precision(&set, &labels, &RetrievalOptions::default()).unwrap();
    assert!((r.mean - 0.5).abs() <= 0.05, "mean {}", r.mean);
}

#[test]
fn random_nrprec_is_near_zero() {
    let mut within = 0;
    let seeds = 40;
    for seed in 0..seeds {
        let set = random_set(1000 + seed, 2000, 8, MetricKind::Euclidean, 0);
        let labels: Vec<String> = (0..2000).map(|i| format!("v{}", (i + seed as usize) % 4)).collect();
        let labels = shuffle(labels, seed);
        let rep = nr_precision(&set, "p", &labels, &RetrievalOptions::default()).unwrap();
        if rep.mean_nrprec.abs() <= 0.5 {
            within += 1;
        }
    }
    assert!(within as f64 >= 0.99 * seeds as f64, "{within}/{seeds}");
}

fn shuffle(mut v: Vec<String>, seed: u64) -> Vec<String> {
    use rand::seq::SliceRandom;
    v.shuffle(&mut common::rng(seed ^ 0xdead_beef));
    v
}

fn scaled(set: &EmbeddingSet, c: f32) -> EmbeddingSet {
    EmbeddingSet::from_rows(set.data().iter().map(|v| v * c).collect(), set.dim(), set.metric())
        .unwrap()
}

#[test]
fn positive_scaling_leaves_rankings_unchanged() {
    // Powers of two keep every score exactly proportional, so the check is exact.
    for metric in [
        MetricKind::Euclidean,
        MetricKind::SquaredEuclidean,
        MetricKind::CosineSimilarity,
    ] {
        let set = random_set(21, 300, 8, metric, 4);
        let labels = random_labels(22, 300, 5);
        let base_lists = blocked_neighbor_pass(&set, 20, 32).unwrap();
        let base = nr_precision(&set, "p", &labels, &Default::default()).unwrap();
        let base_r = r_precision(&set, &labels, &Default::default()).unwrap();
        for c in [0.25f32, 2.0, 8.0] {
            let s = scaled(&set, c);
            assert_eq!(blocked_neighbor_pass(&s, 20, 32).unwrap(), base_lists);
            assert_eq!(nr_precision(&s, "p", &labels, &Default::default()).unwrap(), base);
            assert_eq!(r_precision(&s, &labels, &Default::default()).unwrap(), base_r);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn normalized_values_within_attainable_range(seed in 0u64..10_000, k in 2usize..6, n in 10usize..80) {
        let set = random_set(seed, n, 3, MetricKind::Euclidean, 0);
        let labels = random_labels(seed + 1, n, k);
        if let Ok(rep) = nr_precision(&set, "p", &labels, &Default::default()) {
            for s in &rep.per_query {
                prop_assert!(s.matches <= s.r);
                prop_assert!((s.mu - s.r as f64 * s.p).abs() < 1e-12);
                prop_assert!((s.sigma - (s.r as f64 * s.p * (1.0 - s.p)).sqrt()).abs() < 1e-12);
                prop_assert!(s.normalized >= -s.mu / s.sigma - 1e-12);
                prop_assert!(s.normalized <= (s.r as f64 - s.mu) / s.sigma + 1e-12);
            }
            prop_assert!(rep.mean_rprec >= 0.0 && rep.mean_rprec <= 1.0);
            prop_assert_eq!(rep.significant, rep.mean_nrprec.abs() > 2.576);
        }
    }

    #[test]
    fn blocked_equals_naive_on_small_tied_sets(seed in 0u64..10_000, n in 2usize..60, block in 1usize..20, metric_ix in 0usize..5) {
        let metric = MetricKind::ALL[metric_ix];
        let set = random_set(seed, n, 3, metric, 3);
        let r = (n - 1).min(7);
        let blocked = blocked_neighbor_pass(&set, r, block).unwrap();
        for (q, list) in blocked.iter().enumerate() {
            prop_assert_eq!(&list.neighbor_indices, &naive_top_r(&set, q, r));
        }
    }
}
