//! Embedding distances and similarities used by the analysed losses.
//!
//! All scoring goes through the kernels in this module so that the blocked
//! neighbour pass, `top_r`, and [`pairwise_score`] produce bit-identical
//! values for the same pair of rows.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Euclidean,
    SquaredEuclidean,
    CosineSimilarity,
    DotProductSimilarity,
    SnrDistance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Smaller is closer.
    Distance,
    /// Larger is closer.
    Similarity,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] = [
        MetricKind::Euclidean,
        MetricKind::SquaredEuclidean,
        MetricKind::CosineSimilarity,
        MetricKind::DotProductSimilarity,
        MetricKind::SnrDistance,
    ];

    pub fn orientation(self) -> Orientation {
        match self {
            MetricKind::Euclidean | MetricKind::SquaredEuclidean | MetricKind::SnrDistance => {
                Orientation::Distance
            }
            MetricKind::CosineSimilarity | MetricKind::DotProductSimilarity => {
                Orientation::Similarity
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Euclidean => "euclidean",
            MetricKind::SquaredEuclidean => "squared_euclidean",
            MetricKind::CosineSimilarity => "cosine_similarity",
            MetricKind::DotProductSimilarity => "dot_product_similarity",
            MetricKind::SnrDistance => "snr_distance",
        }
    }

    /// Orders two scores so that the closer one comes first.
    #[inline]
    pub fn closer(self, a: f64, b: f64) -> Ordering {
        match self.orientation() {
            Orientation::Distance => a.total_cmp(&b),
            Orientation::Similarity => b.total_cmp(&a),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "euclidean" => MetricKind::Euclidean,
            "squared_euclidean" | "sqeuclidean" => MetricKind::SquaredEuclidean,
            "cosine_similarity" | "cosine" => MetricKind::CosineSimilarity,
            "dot_product_similarity" | "dot_product" | "dot" => MetricKind::DotProductSimilarity,
            "snr_distance" | "snr" => MetricKind::SnrDistance,
            other => return Err(Error::arg(format!("unknown metric {other:?}"))),
        })
    }
}

const LANES: usize = 16;

#[inline(always)]
fn product(x: f32, y: f32) -> f32 {
    x * y
}

#[inline(always)]
fn squared_gap(x: f32, y: f32) -> f32 {
    let d = x - y;
    d * d
}

/// `sum(term(a[i], b[i]))` with `LANES` f32 partial sums reduced in f64.
#[inline(always)]
fn accumulate(a: &[f32], b: &[f32], term: impl Fn(f32, f32) -> f32) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f32; LANES];
    let (ca, ra) = a.split_at(a.len() - a.len() % LANES);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(LANES).zip(cb.chunks_exact(LANES)) {
        for l in 0..LANES {
            acc[l] += term(x[l], y[l]);
        }
    }
    let mut tail = 0f32;
    for (x, y) in ra.iter().zip(rb) {
        tail += term(*x, *y);
    }
    reduce(acc) + tail as f64
}

#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    accumulate(a, b, product)
}

#[inline]
pub(crate) fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    accumulate(a, b, squared_gap)
}

#[inline]
fn reduce(acc: [f32; LANES]) -> f64 {
    acc.iter().map(|&v| v as f64).sum()
}

pub(crate) fn norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

/// Population variance, accumulated in `f64`.
pub(crate) fn variance(a: &[f32]) -> f64 {
    let m = a.len() as f64;
    let mean = a.iter().map(|&v| v as f64).sum::<f64>() / m;
    a.iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / m
}

/// Population variance of `a - b` without materialising the difference.
pub(crate) fn variance_of_difference(a: &[f32], b: &[f32]) -> f64 {
    let m = a.len() as f64;
    let (mut s, mut ss) = (0f64, 0f64);
    for (&x, &y) in a.iter().zip(b) {
        let d = x as f64 - y as f64;
        s += d;
        ss += d * d;
    }
    let mean = s / m;
    (ss / m - mean * mean).max(0.0)
}

/// Per-row quantities a metric needs from its anchor, computed once.
#[derive(Debug, Clone)]
pub(crate) enum RowCache {
    None,
    Norms(Vec<f64>),
    Variances(Vec<f64>),
}

impl RowCache {
    pub(crate) fn build(metric: MetricKind, rows: &[f32], dim: usize) -> Self {
        match metric {
            MetricKind::CosineSimilarity => {
                RowCache::Norms(rows.chunks_exact(dim).map(norm).collect())
            }
            MetricKind::SnrDistance => {
                RowCache::Variances(rows.chunks_exact(dim).map(variance).collect())
            }
            _ => RowCache::None,
        }
    }
}

/// Scores the pair `(query, candidate)` using cached row statistics.
#[inline]
pub(crate) fn cached_score(
    metric: MetricKind,
    cache: &RowCache,
    query: usize,
    candidate: usize,
    a: &[f32],
    b: &[f32],
) -> f64 {
    match (metric, cache) {
        (MetricKind::Euclidean, _) => squared_distance(a, b).sqrt(),
        (MetricKind::SquaredEuclidean, _) => squared_distance(a, b),
        (MetricKind::DotProductSimilarity, _) => dot(a, b),
        (MetricKind::CosineSimilarity, RowCache::Norms(n)) => {
            dot(a, b) / (n[query] * n[candidate])
        }
        (MetricKind::SnrDistance, RowCache::Variances(v)) => {
            variance_of_difference(a, b) / v[query]
        }
        _ => unreachable!("row cache does not match metric"),
    }
}

#[inline(always)]
fn score_grouped(
    q: &[f32],
    rows: &[f32],
    dim: usize,
    first: usize,
    out: &mut [f64],
    term: impl Fn(f32, f32) -> f32 + Copy,
    finish: impl Fn(usize, f64) -> f64,
) {
    let row = |c: usize| &rows[c * dim..(c + 1) * dim];
    for (k, slot) in out.iter_mut().enumerate() {
        let c = first + k;
        *slot = finish(c, accumulate(q, row(c), term));
    }
}

/// Scores `query` against rows `first..first + out.len()` of `rows`,
/// writing exactly what [`cached_score`] would.
pub(crate) fn score_row(
    metric: MetricKind,
    cache: &RowCache,
    rows: &[f32],
    dim: usize,
    query: usize,
    first: usize,
    out: &mut [f64],
) {
    let q = &rows[query * dim..(query + 1) * dim];
    match (metric, cache) {
        (MetricKind::Euclidean, _) => score_grouped(q, rows, dim, first, out, squared_gap, |_, v| v.sqrt()),
        (MetricKind::SquaredEuclidean, _) => score_grouped(q, rows, dim, first, out, squared_gap, |_, v| v),
        (MetricKind::DotProductSimilarity, _) => score_grouped(q, rows, dim, first, out, product, |_, v| v),
        (MetricKind::CosineSimilarity, RowCache::Norms(n)) => {
            score_grouped(q, rows, dim, first, out, product, |c, v| v / (n[query] * n[c]))
        }
        _ => {
            for (k, slot) in out.iter_mut().enumerate() {
                let c = first + k;
                *slot = cached_score(metric, cache, query, c, q, &rows[c * dim..(c + 1) * dim]);
            }
        }
    }
}

/// Score between two embedding vectors. For `snr_distance`, `a` is the anchor.
pub fn pairwise_score(metric: MetricKind, a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::arg(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::arg("embedding dimension must be at least 1"));
    }
    Ok(match metric {
        MetricKind::Euclidean => squared_distance(a, b).sqrt(),
        MetricKind::SquaredEuclidean => squared_distance(a, b),
        MetricKind::DotProductSimilarity => dot(a, b),
        MetricKind::CosineSimilarity => {
            let (na, nb) = (norm(a), norm(b));
            if na == 0.0 || nb == 0.0 {
                return Err(Error::DegenerateVector("zero vector under cosine similarity"));
            }
            dot(a, b) / (na * nb)
        }
        MetricKind::SnrDistance => {
            let va = variance(a);
            if va == 0.0 {
                return Err(Error::DegenerateVector(
                    "zero-variance anchor under SNR distance",
                ));
            }
            variance_of_difference(a, b) / va
        }
    })
}
