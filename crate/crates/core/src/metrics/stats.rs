//! Rank-sum tests with Holm step-down correction, and descriptive statistics
//! for comparing independent runs.

use std::collections::BTreeMap;

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Sample sizes up to this bound (both groups) use the exact permutation distribution.
pub const EXACT_MAX_GROUP: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankSumResult {
    /// Mann–Whitney U of the first sample.
    pub u: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub exact: bool,
}

/// Midranks (1-based) of the pooled sample, plus the tie-group sizes.
fn midranks(pooled: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

fn check_samples(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Config("rank-sum test needs two non-empty samples".into()));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::Config("rank-sum test needs finite scores".into()));
    }
    Ok(())
}

fn u_statistic(a: &[f64], ranks: &[f64]) -> f64 {
    let n = a.len() as f64;
    ranks[..a.len()].iter().sum::<f64>() - n * (n + 1.0) / 2.0
}

/// Normal approximation with tie and continuity correction.
pub fn mann_whitney_normal(a: &[f64], b: &[f64]) -> Result<RankSumResult> {
    check_samples(a, b)?;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let total = n + m;
    let u = u_statistic(a, &ranks);
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum();
    let var = n * m / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - n * m / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
        erfc(z / std::f64::consts::SQRT_2).min(1.0)
    };
    Ok(RankSumResult {
        u,
        p_value,
        exact: false,
    })
}

/// Exact permutation p-value, counting rank-sum subsets by dynamic programming
/// over doubled midranks (integers, so ties are handled exactly).
pub fn mann_whitney_exact(a: &[f64], b: &[f64]) -> Result<RankSumResult> {
    check_samples(a, b)?;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, _) = midranks(&pooled);
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let n = a.len();
    let max_sum: usize = doubled.iter().sum();

    // ways[k][s]: subsets of size k with doubled rank sum s
    let mut ways = vec![vec![0u128; max_sum + 1]; n + 1];
    ways[0][0] = 1;
    for &r in &doubled {
        for k in (1..=n).rev() {
            for s in (r..=max_sum).rev() {
                ways[k][s] += ways[k - 1][s - r];
            }
        }
    }
    let total: u128 = ways[n].iter().sum();
    // doubled expected sum is n * (N + 1)
    let centre = (n * (pooled.len() + 1)) as i64;
    let observed: i64 = doubled[..n].iter().sum::<usize>() as i64;
    let dev = (observed - centre).abs();
    let extreme: u128 = ways[n]
        .iter()
        .enumerate()
        .filter(|(s, _)| (*s as i64 - centre).abs() >= dev)
        .map(|(_, w)| *w)
        .sum();
    Ok(RankSumResult {
        u: u_statistic(a, &ranks),
        p_value: (extreme as f64 / total as f64).min(1.0),
        exact: true,
    })
}

/// Two-sided Mann–Whitney U test; exact when both groups are small.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> Result<RankSumResult> {
    if a.len() <= EXACT_MAX_GROUP && b.len() <= EXACT_MAX_GROUP {
        mann_whitney_exact(a, b)
    } else {
        mann_whitney_normal(a, b)
    }
}

/// Holm step-down adjusted p-values, returned in input order.
pub fn holm(p_values: &[f64]) -> Vec<f64> {
    let k = p_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut adjusted = vec![0.0; k];
    let mut running = 0.0f64;
    for (i, &idx) in order.iter().enumerate() {
        running = running.max(((k - i) as f64 * p_values[idx]).min(1.0));
        adjusted[idx] = running;
    }
    adjusted
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseComparison {
    pub first: String,
    pub second: String,
    pub u: f64,
    pub raw_p: f64,
    pub adjusted_p: f64,
}

/// Pairwise rank-sum tests between every pair of methods (in name order),
/// Holm-adjusted across all pairs.
pub fn ranksum_holm(score_sets: &BTreeMap<String, Vec<f64>>) -> Result<Vec<PairwiseComparison>> {
    if score_sets.len() < 2 {
        return Err(Error::Config(format!(
            "need at least two methods to compare, got {}",
            score_sets.len()
        )));
    }
    if let Some((name, runs)) = score_sets.iter().find(|(_, v)| v.len() < 3) {
        return Err(Error::Config(format!(
            "method `{name}` has {} runs, need at least 3",
            runs.len()
        )));
    }
    let names: Vec<&String> = score_sets.keys().collect();
    let mut out = Vec::new();
    for i in 0..names.len() {
        for j in i + 1..names.len() {
            let r = mann_whitney(&score_sets[names[i]], &score_sets[names[j]])?;
            out.push(PairwiseComparison {
                first: names[i].clone(),
                second: names[j].clone(),
                u: r.u,
                raw_p: r.p_value,
                adjusted_p: 0.0,
            });
        }
    }
    let raw: Vec<f64> = out.iter().map(|c| c.raw_p).collect();
    for (c, adj) in out.iter_mut().zip(holm(&raw)) {
        c.adjusted_p = adj;
    }
    Ok(out)
}

/// Mean, spread and quartiles of a set of per-run scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Describe {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
    /// `std / mean * 100`.
    pub std_pct: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Describe {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Quantile by linear interpolation between closest ranks on sorted data
/// (position `(n - 1) * q`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn describe(values: &[f64]) -> Result<Describe> {
    if values.is_empty() {
        return Err(Error::Config("cannot describe an empty sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let std_pct = if mean != 0.0 { std / mean.abs() * 100.0 } else { 0.0 };
    Ok(Describe {
        n,
        mean,
        std,
        std_pct,
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[n - 1],
    })
}
