//! Exact top-R retrieval.
//!
//! Candidates are totally ordered by `(closeness, index)`: the closer score
//! first (smaller distance or larger similarity), ties broken by ascending
//! candidate index. Under that order the top-R set of every query is unique,
//! so the single-query path and the blocked pass agree bit for bit no matter
//! how work is split across blocks or threads.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::io::EmbeddingSet;
use crate::metric::{cached_score, score_row, MetricKind, RowCache};
use crate::par;

pub const DEFAULT_BLOCK_SIZE: usize = 128;

/// The `R` closest items to a query, closest first. Never contains the query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborList {
    pub query_index: usize,
    pub neighbor_indices: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Candidate {
    pub score: f64,
    pub index: u32,
}

#[inline]
pub(crate) fn rank_order(metric: MetricKind, a: &Candidate, b: &Candidate) -> Ordering {
    metric
        .closer(a.score, b.score)
        .then_with(|| a.index.cmp(&b.index))
}

/// Keeps the best `k` candidates seen so far.
///
/// Candidates accumulate in a buffer of twice the target size; when it fills
/// up it is cut back to the best `k` with a linear-time selection, and the
/// k-th best becomes a rejection threshold for later pushes.
pub(crate) struct BoundedSelection {
    k: usize,
    metric: MetricKind,
    buf: Vec<Candidate>,
    worst: Option<Candidate>,
}

impl BoundedSelection {
    pub fn new(k: usize, metric: MetricKind) -> Self {
        Self {
            k,
            metric,
            buf: Vec::new(),
            worst: None,
        }
    }

    fn capacity(&self) -> usize {
        (2 * self.k).max(self.k + 16)
    }

    #[inline]
    pub fn push(&mut self, c: Candidate) {
        if self.k == 0 {
            return;
        }
        if let Some(w) = &self.worst {
            if rank_order(self.metric, &c, w) != Ordering::Less {
                return;
            }
        }
        if self.buf.len() == self.capacity() {
            self.compact();
            if rank_order(self.metric, &c, self.worst.as_ref().unwrap()) != Ordering::Less {
                return;
            }
        }
        if self.buf.capacity() == 0 {
            self.buf.reserve_exact(self.capacity());
        }
        self.buf.push(c);
    }

    fn compact(&mut self) {
        let metric = self.metric;
        if self.buf.len() > self.k {
            self.buf
                .select_nth_unstable_by(self.k - 1, |a, b| rank_order(metric, a, b));
            self.buf.truncate(self.k);
        }
        self.worst = self
            .buf
            .iter()
            .copied()
            .max_by(|a, b| rank_order(metric, a, b));
    }

    /// The best `k` candidates (or all of them if fewer were pushed), unsorted.
    pub fn finish_unsorted(mut self) -> Vec<Candidate> {
        if self.buf.len() > self.k {
            let metric = self.metric;
            self.buf
                .select_nth_unstable_by(self.k - 1, |a, b| rank_order(metric, a, b));
            self.buf.truncate(self.k);
        }
        self.buf
    }

    pub fn finish_sorted(self) -> Vec<Candidate> {
        let metric = self.metric;
        let mut v = self.finish_unsorted();
        v.sort_unstable_by(|a, b| rank_order(metric, a, b));
        v
    }
}

fn check_query(set: &EmbeddingSet, query: usize) -> Result<()> {
    if query >= set.len() {
        return Err(Error::arg(format!(
            "query index {query} out of range for {} embeddings",
            set.len()
        )));
    }
    Ok(())
}

fn check_r(set: &EmbeddingSet, r: usize, include_self: bool) -> Result<()> {
    let available = if include_self { set.len() } else { set.len() - 1 };
    if r > available {
        return Err(Error::arg(format!(
            "R = {r} exceeds the {available} retrievable items"
        )));
    }
    Ok(())
}

/// The `r` items closest to `query`, excluding the query itself.
pub fn top_r(set: &EmbeddingSet, query: usize, r: usize) -> Result<NeighborList> {
    check_query(set, query)?;
    check_r(set, r, false)?;
    let cache = RowCache::build(set.metric(), set.data(), set.dim());
    let found = single_query(set, &cache, query, r, false);
    Ok(NeighborList {
        query_index: query,
        neighbor_indices: found.iter().map(|c| c.index as usize).collect(),
    })
}

pub(crate) fn single_query(
    set: &EmbeddingSet,
    cache: &RowCache,
    query: usize,
    r: usize,
    include_self: bool,
) -> Vec<Candidate> {
    let metric = set.metric();
    let q = set.row(query);
    let mut selection = BoundedSelection::new(r, metric);
    for c in 0..set.len() {
        if c == query && !include_self {
            continue;
        }
        selection.push(Candidate {
            score: cached_score(metric, cache, query, c, q, set.row(c)),
            index: c as u32,
        });
    }
    selection.finish_sorted()
}

/// Top-`r_max` neighbour lists for every query, computed tile by tile.
///
/// Memory is bounded by one `block_size x block_size` score tile plus the
/// per-query selections of the block in flight. Query blocks run in parallel
/// when the `parallel` feature is on.
pub fn blocked_neighbor_pass(
    set: &EmbeddingSet,
    r_max: usize,
    block_size: usize,
) -> Result<Vec<NeighborList>> {
    check_r(set, r_max, false)?;
    scan_neighbors(
        set,
        block_size,
        false,
        |_| r_max,
        |query, mut found| {
            let metric = set.metric();
            found.sort_unstable_by(|a, b| rank_order(metric, a, b));
            NeighborList {
                query_index: query,
                neighbor_indices: found.iter().map(|c| c.index as usize).collect(),
            }
        },
    )
}

/// Streams each query's exact top-`k(query)` candidates (unsorted) into
/// `consume`, one query block at a time. Results are returned in query order.
pub(crate) fn scan_neighbors<T, K, F>(
    set: &EmbeddingSet,
    block_size: usize,
    include_self: bool,
    k_for: K,
    consume: F,
) -> Result<Vec<T>>
where
    T: Send,
    K: Fn(usize) -> usize + Sync + Send,
    F: Fn(usize, Vec<Candidate>) -> T + Sync + Send,
{
    if block_size == 0 {
        return Err(Error::arg("block size must be at least 1"));
    }
    let n = set.len();
    let metric = set.metric();
    let cache = RowCache::build(metric, set.data(), set.dim());
    let n_blocks = n.div_ceil(block_size);

    let per_block = par::map_range(n_blocks, |b| {
        let q_start = b * block_size;
        let q_end = (q_start + block_size).min(n);
        let mut selections: Vec<BoundedSelection> = (q_start..q_end)
            .map(|q| BoundedSelection::new(k_for(q), metric))
            .collect();
        let mut tile = vec![0f64; block_size * block_size];

        for c_start in (0..n).step_by(block_size) {
            let c_end = (c_start + block_size).min(n);
            let width = c_end - c_start;
            for (qi, q) in (q_start..q_end).enumerate() {
                let scores = &mut tile[qi * width..(qi + 1) * width];
                score_row(metric, &cache, set.data(), set.dim(), q, c_start, scores);
            }
            for (qi, q) in (q_start..q_end).enumerate() {
                let selection = &mut selections[qi];
                let scores = &tile[qi * width..(qi + 1) * width];
                for (&score, c) in scores.iter().zip(c_start..c_end) {
                    if c == q && !include_self {
                        continue;
                    }
                    selection.push(Candidate {
                        score,
                        index: c as u32,
                    });
                }
            }
        }

        selections
            .into_iter()
            .zip(q_start..q_end)
            .map(|(s, q)| consume(q, s.finish_unsorted()))
            .collect::<Vec<T>>()
    });
    Ok(per_block.into_iter().flatten().collect())
}
