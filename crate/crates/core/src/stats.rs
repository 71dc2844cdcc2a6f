//! Rank statistics for comparing result cohorts.
//!
//! The Mann-Whitney U test uses midranks for ties. Small samples
//! (min(n1, n2) <= 8, pooled size <= 400) get an exact permutation
//! p-value computed by dynamic programming over the pooled rank multiset,
//! which enumerates the same distribution as brute-force arrangement
//! counting. Larger samples use the tie-corrected normal approximation
//! with continuity correction.
//!
//! Ranks are kept as doubled integers (a midrank like 3.5 is stored as 7)
//! so the exact path never touches floating point until the final division.

use statrs::distribution::{ContinuousCDF, Normal};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("alpha must be in (0, 1)")]
    BadAlpha,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alternative {
    TwoSided,
    /// First sample tends larger.
    Greater,
    /// First sample tends smaller.
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UTestMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UTestResult {
    /// U statistic of the first sample.
    pub u: f64,
    pub p: f64,
    pub method: UTestMethod,
}

const EXACT_MIN_SIDE: usize = 8;
const EXACT_POOL_CAP: usize = 400;

pub fn mann_whitney_u(a: &[f64], b: &[f64], alternative: Alternative) -> Result<UTestResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n1 = a.len();
    let n2 = b.len();
    let pool = rank_pool(a, b);
    // U of a from its doubled rank sum; exact while ranks are integers.
    let doubled_u_a = pool.doubled_r_a as i64 - (n1 * (n1 + 1)) as i64;
    let u_a = doubled_u_a as f64 / 2.0;

    let n = n1 + n2;
    if n1.min(n2) <= EXACT_MIN_SIDE && n <= EXACT_POOL_CAP {
        let (le, ge) = exact_tails(&pool, n1, n2, doubled_u_a);
        let p = match alternative {
            Alternative::TwoSided => (2.0 * le.min(ge)).min(1.0),
            Alternative::Greater => ge,
            Alternative::Less => le,
        };
        return Ok(UTestResult { u: u_a, p, method: UTestMethod::Exact });
    }

    let n1f = n1 as f64;
    let n2f = n2 as f64;
    let nf = n as f64;
    let mean = n1f * n2f / 2.0;
    let tie_term: f64 =
        pool.tie_sizes.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (nf * (nf - 1.0));
    let var = n1f * n2f / 12.0 * ((nf + 1.0) - tie_term);
    if var <= 0.0 {
        // Every pooled value tied: the test cannot discriminate.
        return Ok(UTestResult { u: u_a, p: 1.0, method: UTestMethod::NormalApprox });
    }
    let sd = var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let p = match alternative {
        Alternative::TwoSided => {
            let z = ((u_a - mean).abs() - 0.5).max(0.0) / sd;
            (2.0 * (1.0 - normal.cdf(z))).min(1.0)
        }
        Alternative::Greater => {
            let z = (u_a - mean - 0.5) / sd;
            1.0 - normal.cdf(z)
        }
        Alternative::Less => {
            let z = (u_a - mean + 0.5) / sd;
            normal.cdf(z)
        }
    };
    Ok(UTestResult { u: u_a, p, method: UTestMethod::NormalApprox })
}

struct RankPool {
    /// Doubled midrank of every pooled observation, pool-sorted order.
    doubled_ranks: Vec<u64>,
    /// Sum of the first sample's doubled midranks.
    doubled_r_a: u64,
    tie_sizes: Vec<usize>,
}

fn rank_pool(a: &[f64], b: &[f64]) -> RankPool {
    let mut pooled: Vec<(f64, bool)> =
        a.iter().map(|&v| (v, true)).chain(b.iter().map(|&v| (v, false))).collect();
    pooled.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("values validated finite"));
    let n = pooled.len();
    let mut doubled_ranks = vec![0u64; n];
    let mut doubled_r_a = 0u64;
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        // 1-based positions i+1..=j+1 share midrank ((i+1)+(j+1))/2.
        let doubled = (i + 1 + j + 1) as u64;
        for k in i..=j {
            doubled_ranks[k] = doubled;
            if pooled[k].1 {
                doubled_r_a += doubled;
            }
        }
        tie_sizes.push(j - i + 1);
        i = j + 1;
    }
    RankPool { doubled_ranks, doubled_r_a, tie_sizes }
}

/// P(U_a <= u) and P(U_a >= u) under the permutation null, exactly.
/// The DP runs over the smaller sample's rank-sum distribution; the other
/// side follows from U_a + U_b = n1 n2.
fn exact_tails(pool: &RankPool, n1: usize, n2: usize, doubled_u_a: i64) -> (f64, f64) {
    let k = n1.min(n2);
    let max_sum: u64 = {
        let mut sorted = pool.doubled_ranks.clone();
        sorted.sort_unstable();
        sorted.iter().rev().take(k).sum()
    };
    // count[j][s]: arrangements choosing j pooled items with doubled-rank sum s.
    let mut count = vec![vec![0u64; max_sum as usize + 1]; k + 1];
    count[0][0] = 1;
    for &r in &pool.doubled_ranks {
        for j in (0..k).rev() {
            for s in 0..=(max_sum.saturating_sub(r)) as usize {
                if count[j][s] > 0 {
                    count[j + 1][s + r as usize] += count[j][s];
                }
            }
        }
    }
    let doubled_u_small = if n1 <= n2 {
        doubled_u_a
    } else {
        // U_b = n1 n2 - U_a, doubled.
        2 * (n1 * n2) as i64 - doubled_u_a
    };
    let offset = (k * (k + 1)) as i64;
    let mut le = 0u64;
    let mut ge = 0u64;
    let mut total = 0u64;
    for (s, &ways) in count[k].iter().enumerate() {
        if ways == 0 {
            continue;
        }
        let du = s as i64 - offset;
        total += ways;
        if du <= doubled_u_small {
            le += ways;
        }
        if du >= doubled_u_small {
            ge += ways;
        }
    }
    let le_p = le as f64 / total as f64;
    let ge_p = ge as f64 / total as f64;
    if n1 <= n2 {
        (le_p, ge_p)
    } else {
        (ge_p, le_p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BonferroniResult {
    pub threshold: f64,
    pub flags: Vec<bool>,
}

/// Flags p-values significant under the Bonferroni-corrected threshold
/// alpha / m (strict inequality).
pub fn bonferroni(pvals: &[f64], alpha: f64) -> Result<BonferroniResult, StatsError> {
    if pvals.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
        return Err(StatsError::BadAlpha);
    }
    let threshold = alpha / pvals.len() as f64;
    Ok(BonferroniResult { threshold, flags: pvals.iter().map(|&p| p < threshold).collect() })
}

/// Quantile by linear interpolation between closest ranks of the sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> Result<f64, StatsError> {
    if sorted.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

pub fn median(values: &[f64]) -> Result<f64, StatsError> {
    let mut sorted = values.to_vec();
    if sorted.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    quantile(&sorted, 0.5)
}

#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub group: String,
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl SummaryRow {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Median and quartiles per group, groups in key order.
pub fn summarize(groups: &BTreeMap<String, Vec<f64>>) -> Result<Vec<SummaryRow>, StatsError> {
    let mut out = Vec::with_capacity(groups.len());
    for (group, values) in groups {
        if values.is_empty() {
            return Err(StatsError::EmptySample);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.push(SummaryRow {
            group: group.clone(),
            n: sorted.len(),
            median: quantile(&sorted, 0.5)?,
            q1: quantile(&sorted, 0.25)?,
            q3: quantile(&sorted, 0.75)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force permutation oracle: every way of assigning n1 of the pooled
    /// values to the first sample, U computed directly from value comparisons.
    fn enumeration_oracle(a: &[f64], b: &[f64]) -> (f64, f64) {
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        let n = pooled.len();
        let n1 = a.len();
        let u_of = |xs: &[f64], ys: &[f64]| -> f64 {
            xs.iter()
                .flat_map(|&x| {
                    ys.iter().map(move |&y| {
                        if x > y {
                            1.0
                        } else if x == y {
                            0.5
                        } else {
                            0.0
                        }
                    })
                })
                .sum()
        };
        let u_obs = u_of(a, b);
        let mut le = 0u64;
        let mut ge = 0u64;
        let mut total = 0u64;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != n1 {
                continue;
            }
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for (i, &v) in pooled.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    xs.push(v);
                } else {
                    ys.push(v);
                }
            }
            let u = u_of(&xs, &ys);
            total += 1;
            if u <= u_obs + 1e-9 {
                le += 1;
            }
            if u >= u_obs - 1e-9 {
                ge += 1;
            }
        }
        let le_p = le as f64 / total as f64;
        let ge_p = ge as f64 / total as f64;
        (u_obs, (2.0 * le_p.min(ge_p)).min(1.0))
    }

    #[test]
    fn separated_triples_give_frozen_exact_p() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], Alternative::TwoSided).unwrap();
        assert_eq!(r.u, 0.0);
        assert!((r.p - 0.1).abs() < 1e-12);
        assert_eq!(r.method, UTestMethod::Exact);
    }

    #[test]
    fn identical_samples_are_insignificant() {
        let a: Vec<f64> = (0..3).map(|i| i as f64).collect();
        let r = mann_whitney_u(&a, &a, Alternative::TwoSided).unwrap();
        assert!((r.p - 1.0).abs() < 0.02);
        let big: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let r = mann_whitney_u(&big, &big, Alternative::TwoSided).unwrap();
        assert!((r.p - 1.0).abs() < 0.02);
        assert_eq!(r.method, UTestMethod::NormalApprox);
    }

    #[test]
    fn fully_tied_pool_gives_p_one() {
        let a = vec![2.0; 30];
        let b = vec![2.0; 30];
        let r = mann_whitney_u(&a, &b, Alternative::TwoSided).unwrap();
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn large_shift_is_overwhelming() {
        let a: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        let b: Vec<f64> = (0..100).map(|i| 5.0 + i as f64 * 0.01).collect();
        let r = mann_whitney_u(&a, &b, Alternative::Less).unwrap();
        assert!(r.p < 1e-10, "p = {}", r.p);
        let r2 = mann_whitney_u(&b, &a, Alternative::Greater).unwrap();
        assert!(r2.p < 1e-10);
    }

    #[test]
    fn exact_path_matches_enumeration_with_ties() {
        let cases: Vec<(Vec<f64>, Vec<f64>)> = vec![
            (vec![1.0, 1.0, 2.0], vec![1.0, 2.0, 2.0]),
            (vec![1.0, 2.0, 3.0, 4.0], vec![2.0, 2.0, 5.0]),
            (vec![0.5, 0.5, 0.5, 0.5], vec![0.5, 1.0, 1.5]),
            (vec![3.0, 1.0, 4.0, 1.0, 5.0], vec![9.0, 2.0, 6.0, 5.0, 3.0]),
        ];
        for (a, b) in cases {
            let r = mann_whitney_u(&a, &b, Alternative::TwoSided).unwrap();
            let (u_oracle, p_oracle) = enumeration_oracle(&a, &b);
            assert!((r.u - u_oracle).abs() < 1e-12, "{a:?} vs {b:?}");
            assert!((r.p - p_oracle).abs() < 1e-9, "{a:?} vs {b:?}: {} vs {}", r.p, p_oracle);
        }
    }

    #[test]
    fn one_sided_tails_complement() {
        let a = vec![1.0, 2.0, 7.0];
        let b = vec![3.0, 4.0, 5.0, 6.0];
        let g = mann_whitney_u(&a, &b, Alternative::Greater).unwrap();
        let l = mann_whitney_u(&a, &b, Alternative::Less).unwrap();
        // Exact tails overlap on the observed value, so they sum to >= 1.
        assert!(g.p + l.p >= 1.0);
        assert!(g.p <= 1.0 && l.p <= 1.0);
    }

    #[test]
    fn empty_sample_is_an_error() {
        assert_eq!(
            mann_whitney_u(&[], &[1.0], Alternative::TwoSided),
            Err(StatsError::EmptySample)
        );
    }

    #[test]
    fn nan_rejected() {
        assert_eq!(
            mann_whitney_u(&[f64::NAN], &[1.0], Alternative::TwoSided),
            Err(StatsError::NonFinite)
        );
    }

    #[test]
    fn bonferroni_three_comparisons() {
        let r = bonferroni(&[0.01, 0.02, 0.0167], 0.05).unwrap();
        assert!((r.threshold - 0.05 / 3.0).abs() < 1e-12);
        assert_eq!(r.flags, vec![true, false, false]);
    }

    #[test]
    fn bonferroni_rejects_empty() {
        assert_eq!(bonferroni(&[], 0.05), Err(StatsError::EmptySample));
    }

    #[test]
    fn summarize_frozen_quartiles() {
        let mut groups = BTreeMap::new();
        groups.insert("g".to_string(), vec![1.0, 2.0, 3.0, 4.0]);
        let rows = summarize(&groups).unwrap();
        assert_eq!(rows.len(), 1);
        assert!((rows[0].median - 2.5).abs() < 1e-12);
        assert!((rows[0].iqr() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn median_of_singleton() {
        assert_eq!(median(&[7.0]).unwrap(), 7.0);
    }

    fn arb_sample() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec((0u8..6).prop_map(|v| v as f64), 1..8)
    }

    proptest! {
        #[test]
        fn u_statistics_complement(a in arb_sample(), b in arb_sample()) {
            let ab = mann_whitney_u(&a, &b, Alternative::TwoSided).unwrap();
            let ba = mann_whitney_u(&b, &a, Alternative::TwoSided).unwrap();
            let expect = (a.len() * b.len()) as f64;
            prop_assert!((ab.u + ba.u - expect).abs() < 1e-9);
            prop_assert!((ab.p - ba.p).abs() < 1e-9);
        }

        #[test]
        fn exact_matches_enumeration(
            a in prop::collection::vec((0u8..4).prop_map(|v| v as f64), 2..6),
            b in prop::collection::vec((0u8..4).prop_map(|v| v as f64), 2..6),
        ) {
            let r = mann_whitney_u(&a, &b, Alternative::TwoSided).unwrap();
            let (u_oracle, p_oracle) = enumeration_oracle(&a, &b);
            prop_assert!((r.u - u_oracle).abs() < 1e-12);
            prop_assert!((r.p - p_oracle).abs() < 1e-9);
        }
    }
}
