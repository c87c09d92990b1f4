//! R-Precision and Normalized R-Precision for categorical image properties.
//!
//! For a query `q` and property `k`, `R` is the number of items sharing the
//! query's value. The `R` nearest neighbours are retrieved and the matches
//! counted. NR-Prec standardises that count with the binomial mean `R p` and
//! standard deviation `sqrt(R p (1 - p))` of random retrieval, where `p` is
//! the share of same-value items.
//!
//! By default the query is excluded everywhere: `R` counts the *other*
//! same-value items, `p = R / (n - 1)` and the query is never retrieved.
//! [`QueryMode::Include`] follows the literal counting instead: the query
//! counts toward `R`, `p = R / n`, and it is a retrievable candidate.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{encode_labels, EmbeddingSet, PropertyTable};
use crate::knn::{rank_order, scan_neighbors, Candidate, DEFAULT_BLOCK_SIZE};

/// Two-sided 1% cut-off on the mean NR-Prec.
pub const SIGNIFICANCE_THRESHOLD: f64 = 2.576;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    #[default]
    Exclude,
    Include,
}

#[derive(Debug, Clone, Copy)]
pub struct RetrievalOptions {
    pub query_mode: QueryMode,
    pub block_size: usize,
    pub threshold: f64,
}

impl Default for RetrievalOptions {
    fn default() -> Self {
        Self {
            query_mode: QueryMode::Exclude,
            block_size: DEFAULT_BLOCK_SIZE,
            threshold: SIGNIFICANCE_THRESHOLD,
        }
    }
}

/// `|mean| > threshold`; a value exactly at the threshold is not significant.
pub fn is_significant(mean_nrprec: f64, threshold: f64) -> bool {
    mean_nrprec.abs() > threshold
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RPrecQuery {
    pub query_index: usize,
    pub r: usize,
    pub matches: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RPrecision {
    pub mean: f64,
    pub per_query: Vec<RPrecQuery>,
    pub n_skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NrPrecQueryStat {
    pub query_index: usize,
    pub r: usize,
    pub p: f64,
    pub mu: f64,
    pub sigma: f64,
    pub matches: usize,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NrPrecReport {
    pub property_name: String,
    pub mean_nrprec: f64,
    pub mean_rprec: f64,
    pub per_query: Vec<NrPrecQueryStat>,
    pub n_skipped: usize,
    pub significant: bool,
}

impl NrPrecReport {
    pub fn n_queries(&self) -> usize {
        self.per_query.len()
    }
}

/// Encoded property column with per-value frequencies.
struct LabelColumn {
    codes: Vec<u32>,
    counts: Vec<usize>,
}

impl LabelColumn {
    fn new(values: &[String]) -> Self {
        let (codes, n_values) = encode_labels(values);
        let mut counts = vec![0usize; n_values];
        for &c in &codes {
            counts[c as usize] += 1;
        }
        Self { codes, counts }
    }

    /// `R` for query `q` under the given mode.
    fn r(&self, q: usize, mode: QueryMode) -> usize {
        let same = self.counts[self.codes[q] as usize];
        match mode {
            QueryMode::Exclude => same - 1,
            QueryMode::Include => same,
        }
    }
}

/// For every query, the number of label matches among its top `R` for each
/// column. One neighbour pass serves all columns: each query retrieves its
/// largest `R`, then nested selections shrink that set column by column.
fn match_counts(
    set: &EmbeddingSet,
    columns: &[LabelColumn],
    opts: &RetrievalOptions,
) -> Result<Vec<Vec<usize>>> {
    let mode = opts.query_mode;
    let include_self = mode == QueryMode::Include;
    let metric = set.metric();
    scan_neighbors(
        set,
        opts.block_size,
        include_self,
        |q| columns.iter().map(|c| c.r(q, mode)).max().unwrap_or(0),
        |q, mut found: Vec<Candidate>| {
            let mut order: Vec<usize> = (0..columns.len()).collect();
            order.sort_by_key(|&k| std::cmp::Reverse(columns[k].r(q, mode)));
            let mut matches = vec![0usize; columns.len()];
            for k in order {
                let r = columns[k].r(q, mode);
                if r == 0 {
                    continue;
                }
                if r < found.len() {
                    found.select_nth_unstable_by(r - 1, |a, b| rank_order(metric, a, b));
                    found.truncate(r);
                }
                let codes = &columns[k].codes;
                let label = codes[q];
                matches[k] = found
                    .iter()
                    .filter(|c| codes[c.index as usize] == label)
                    .count();
            }
            matches
        },
    )
}

fn check_labels(set: &EmbeddingSet, name: &str, labels: &[String]) -> Result<()> {
    if labels.len() != set.len() {
        return Err(Error::arg(format!(
            "property {name:?} has {} labels for {} embeddings",
            labels.len(),
            set.len()
        )));
    }
    Ok(())
}

fn build_rprec(column: &LabelColumn, matches: impl Iterator<Item = usize>, mode: QueryMode) -> RPrecision {
    let mut per_query = Vec::new();
    let mut n_skipped = 0;
    for (q, m) in matches.enumerate() {
        let r = column.r(q, mode);
        if r == 0 {
            n_skipped += 1;
            continue;
        }
        per_query.push(RPrecQuery {
            query_index: q,
            r,
            matches: m,
            value: m as f64 / r as f64,
        });
    }
    let mean = mean_of(per_query.iter().map(|s| s.value));
    RPrecision {
        mean,
        per_query,
        n_skipped,
    }
}

fn build_nrprec(
    name: &str,
    column: &LabelColumn,
    matches: impl Iterator<Item = usize>,
    n: usize,
    opts: &RetrievalOptions,
) -> Result<NrPrecReport> {
    let mode = opts.query_mode;
    let pool = match mode {
        QueryMode::Exclude => n - 1,
        QueryMode::Include => n,
    };
    let mut per_query = Vec::new();
    let mut rprec = Vec::new();
    let mut n_skipped = 0;
    for (q, m) in matches.enumerate() {
        let r = column.r(q, mode);
        let p = if pool == 0 { 0.0 } else { r as f64 / pool as f64 };
        if r == 0 || p <= 0.0 || p >= 1.0 {
            n_skipped += 1;
            continue;
        }
        let mu = r as f64 * p;
        let sigma = (r as f64 * p * (1.0 - p)).sqrt();
        per_query.push(NrPrecQueryStat {
            query_index: q,
            r,
            p,
            mu,
            sigma,
            matches: m,
            normalized: (m as f64 - mu) / sigma,
        });
        rprec.push(m as f64 / r as f64);
    }
    if per_query.is_empty() {
        return Err(Error::NoRepeatedValues(name.to_string()));
    }
    let mean_nrprec = mean_of(per_query.iter().map(|s| s.normalized));
    Ok(NrPrecReport {
        property_name: name.to_string(),
        mean_nrprec,
        mean_rprec: mean_of(rprec.into_iter()),
        per_query,
        n_skipped,
        significant: is_significant(mean_nrprec, opts.threshold),
    })
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Mean fraction of same-label items among each query's `R` nearest neighbours.
pub fn r_precision(set: &EmbeddingSet, labels: &[String], opts: &RetrievalOptions) -> Result<RPrecision> {
    check_labels(set, "labels", labels)?;
    let column = LabelColumn::new(labels);
    let counts = match_counts(set, std::slice::from_ref(&column), opts)?;
    let result = build_rprec(&column, counts.iter().map(|m| m[0]), opts.query_mode);
    if result.per_query.is_empty() {
        return Err(Error::NoRepeatedValues("labels".into()));
    }
    Ok(result)
}

/// Normalized R-Precision of a single property column.
pub fn nr_precision(
    set: &EmbeddingSet,
    name: &str,
    labels: &[String],
    opts: &RetrievalOptions,
) -> Result<NrPrecReport> {
    check_labels(set, name, labels)?;
    let column = LabelColumn::new(labels);
    let counts = match_counts(set, std::slice::from_ref(&column), opts)?;
    build_nrprec(name, &column, counts.iter().map(|m| m[0]), set.len(), opts)
}

/// NR-Prec for every property in `table`, sharing one neighbour pass.
/// Reports are sorted by descending `|mean_nrprec|`.
pub fn nr_precision_all(
    set: &EmbeddingSet,
    table: &PropertyTable,
    opts: &RetrievalOptions,
) -> Result<Vec<NrPrecReport>> {
    let table = table.aligned_to(set.ids())?;
    if table.columns().is_empty() {
        return Err(Error::arg("property table has no property columns"));
    }
    let columns: Vec<LabelColumn> = table
        .columns()
        .iter()
        .map(|(_, values)| LabelColumn::new(values))
        .collect();
    let counts = match_counts(set, &columns, opts)?;
    let mut reports = table
        .columns()
        .iter()
        .zip(&columns)
        .enumerate()
        .map(|(k, ((name, _), column))| {
            build_nrprec(name, column, counts.iter().map(|m| m[k]), set.len(), opts)
        })
        .collect::<Result<Vec<_>>>()?;
    reports.sort_by(|a, b| b.mean_nrprec.abs().total_cmp(&a.mean_nrprec.abs()));
    Ok(reports)
}
