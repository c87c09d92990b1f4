#![allow(dead_code)]

use dmlprobe::{pairwise_score, EmbeddingSet, MetricKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian embeddings; `dup_every > 0` copies an earlier row into every
/// `dup_every`-th slot so that exact score ties occur.
pub fn random_set(seed: u64, n: usize, m: usize, metric: MetricKind, dup_every: usize) -> EmbeddingSet {
    let mut r = rng(seed);
    let mut data: Vec<f32> = (0..n * m)
        .map(|_| StandardNormal.sample(&mut r))
        .map(|v: f64| v as f32)
        .collect();
    if dup_every > 0 {
        for i in (dup_every..n).step_by(dup_every) {
            let src = r.random_range(0..i);
            let row: Vec<f32> = data[src * m..(src + 1) * m].to_vec();
            data[i * m..(i + 1) * m].copy_from_slice(&row);
        }
    }
    EmbeddingSet::from_rows(data, m, metric).unwrap()
}

/// Reference retrieval: score every other item, fully sort, take the first `r`.
pub fn naive_top_r(set: &EmbeddingSet, query: usize, r: usize) -> Vec<usize> {
    let metric = set.metric();
    let mut scored: Vec<(f64, usize)> = (0..set.len())
        .filter(|&j| j != query)
        .map(|j| (pairwise_score(metric, set.row(query), set.row(j)).unwrap(), j))
        .collect();
    scored.sort_by(|a, b| metric.closer(a.0, b.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(r).map(|(_, j)| j).collect()
}

/// Labels drawn uniformly from `k` values.
pub fn random_labels(seed: u64, n: usize, k: usize) -> Vec<String> {
    let mut r = rng(seed);
    (0..n).map(|_| format!("v{}", r.random_range(0..k))).collect()
}
