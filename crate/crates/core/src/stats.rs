//! Rank test for comparing two groups of scores, plus small helpers.

use serde::Serialize;

use crate::error::{Error, Result};

/// Largest combined sample size for which the exact null distribution is used.
pub const EXACT_MAX_TOTAL: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MwuMethod {
    Exact,
    NormalApproximation,
}

impl MwuMethod {
    pub fn name(self) -> &'static str {
        match self {
            MwuMethod::Exact => "exact",
            MwuMethod::NormalApproximation => "normal_approximation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MwuResult {
    /// `min(U_a, U_b)`
    pub u_statistic: f64,
    /// Two-sided.
    pub p_value: f64,
    pub method: MwuMethod,
}

impl MwuResult {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Two-sided Mann-Whitney U test.
///
/// Without ties and with `n_a + n_b <= 16` the p-value comes from the exact
/// null distribution of `U`; otherwise a normal approximation with tie
/// correction and continuity correction is used.
pub fn mann_whitney_u(group_a: &[f64], group_b: &[f64]) -> Result<MwuResult> {
    if group_a.is_empty() || group_b.is_empty() {
        return Err(Error::arg("Mann-Whitney U needs two nonempty groups"));
    }
    if group_a.iter().chain(group_b).any(|v| !v.is_finite()) {
        return Err(Error::arg("Mann-Whitney U input contains non-finite values"));
    }
    let (na, nb) = (group_a.len(), group_b.len());
    let pooled: Vec<f64> = group_a.iter().chain(group_b).copied().collect();
    let (ranks, tie_sizes) = midranks(&pooled);

    let rank_sum_a: f64 = ranks[..na].iter().sum();
    let u_a = rank_sum_a - (na * (na + 1)) as f64 / 2.0;
    let u_b = (na * nb) as f64 - u_a;
    let u = u_a.min(u_b);

    let has_ties = tie_sizes.iter().any(|&t| t > 1);
    if !has_ties && na + nb <= EXACT_MAX_TOTAL {
        // Without ties U is an integer.
        let p = exact_two_sided(na, nb, u.round() as usize);
        return Ok(MwuResult {
            u_statistic: u,
            p_value: p,
            method: MwuMethod::Exact,
        });
    }

    let n = (na + nb) as f64;
    let mean = (na * nb) as f64 / 2.0;
    let tie_term: f64 = tie_sizes
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let variance = (na * nb) as f64 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let p = if variance <= 0.0 {
        1.0
    } else {
        let z = ((u_a - mean).abs() - 0.5).max(0.0) / variance.sqrt();
        (2.0 * standard_normal_sf(z)).min(1.0)
    };
    Ok(MwuResult {
        u_statistic: u,
        p_value: p,
        method: MwuMethod::NormalApproximation,
    })
}

/// Upper tail of the standard normal distribution.
fn standard_normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Average ranks (1-based) and the sizes of each tie group.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        ties.push(j - i);
        i = j;
    }
    (ranks, ties)
}

/// Frequencies of `U_a = 0..=na*nb` over all `C(na+nb, na)` equally likely
/// group assignments, via the standard counting recursion
/// `f(a, b, u) = f(a - 1, b, u - b) + f(a, b - 1, u)`.
fn u_frequencies(na: usize, nb: usize) -> Vec<u64> {
    let max_u = na * nb;
    // table[a][b] = distribution for sizes (a, b), built up to (na, nb).
    let mut table: Vec<Vec<Vec<u64>>> = vec![vec![Vec::new(); nb + 1]; na + 1];
    for a in 0..=na {
        for b in 0..=nb {
            let mut dist = vec![0u64; a * b + 1];
            if a == 0 || b == 0 {
                dist[0] = 1;
            } else {
                for (u, slot) in dist.iter_mut().enumerate() {
                    let mut v = 0;
                    if u >= b {
                        v += table[a - 1][b].get(u - b).copied().unwrap_or(0);
                    }
                    v += table[a][b - 1].get(u).copied().unwrap_or(0);
                    *slot = v;
                }
            }
            table[a][b] = dist;
        }
    }
    let dist = std::mem::take(&mut table[na][nb]);
    debug_assert_eq!(dist.len(), max_u + 1);
    dist
}

fn exact_two_sided(na: usize, nb: usize, u: usize) -> f64 {
    let freq = u_frequencies(na, nb);
    let total: u64 = freq.iter().sum();
    let at_most: u64 = freq[..=u.min(freq.len() - 1)].iter().sum();
    (2.0 * at_most as f64 / total as f64).min(1.0)
}

/// Square root of the mean squared deviation (divisor `N`).
pub fn population_std(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::arg("standard deviation of an empty list"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok((ss / n).sqrt())
}

pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::arg("mean of an empty list"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Cut-off `z` with `P(|Z| > z) = alpha` for a standard normal `Z`.
///
/// `alpha = 0.01` returns the conventional rounded value 2.576; other levels
/// are solved by bisection on the tail probability.
pub fn two_sided_threshold(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::arg(format!("alpha must be in (0, 1), got {alpha}")));
    }
    if alpha == 0.01 {
        return Ok(crate::retrieval::SIGNIFICANCE_THRESHOLD);
    }
    let (mut lo, mut hi) = (0.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if 2.0 * standard_normal_sf(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds() {
        assert_eq!(two_sided_threshold(0.01).unwrap(), 2.576);
        assert!((two_sided_threshold(0.05).unwrap() - 1.959964).abs() < 1e-5);
        assert!((two_sided_threshold(0.001).unwrap() - 3.290527).abs() < 1e-5);
        assert!(two_sided_threshold(0.0).is_err());
    }

    #[test]
    fn two_vs_two_fully_separated() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.u_statistic, 0.0);
        assert_eq!(r.method, MwuMethod::Exact);
        assert!((r.p_value - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn identical_groups_are_null() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.method, MwuMethod::NormalApproximation);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        assert!(!r.significant(0.01));
    }

    #[test]
    fn nine_vs_five_separated() {
        let a: Vec<f64> = (10..19).map(f64::from).collect();
        let b: Vec<f64> = (0..5).map(f64::from).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(r.u_statistic, 0.0);
        assert_eq!(r.p_value, 2.0 / 2002.0);
        assert!(r.significant(0.01));
    }

    #[test]
    fn frequencies_sum_to_binomial() {
        let f = u_frequencies(9, 5);
        assert_eq!(f.iter().sum::<u64>(), 2002);
        assert_eq!(f.len(), 46);
        assert_eq!(&f[..4], &[1, 1, 2, 3]);
        // Symmetric about na*nb/2.
        assert!(f.iter().eq(f.iter().rev()));
    }

    #[test]
    fn midranks_with_ties() {
        let (r, t) = midranks(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(r, [3.5, 1.0, 3.5, 2.0]);
        assert_eq!(t, [1, 1, 2]);
    }

    #[test]
    fn large_sample_uses_approximation() {
        let a: Vec<f64> = (0..20).map(f64::from).collect();
        let b: Vec<f64> = (20..40).map(f64::from).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(r.method, MwuMethod::NormalApproximation);
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn empty_group_rejected() {
        assert!(mann_whitney_u(&[], &[1.0]).is_err());
        assert!(population_std(&[]).is_err());
    }

    #[test]
    fn std_examples() {
        assert_eq!(population_std(&[5.0, 5.0, 5.0]).unwrap(), 0.0);
        assert_eq!(population_std(&[0.0, 2.0]).unwrap(), 1.0);
    }
}
