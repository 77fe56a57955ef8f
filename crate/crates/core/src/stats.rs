//! Mann-Whitney U group comparisons.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::features::{SCALAR_FEATURES, SCALAR_NAMES};

pub const DEFAULT_ALPHA: f64 = 0.05;
/// Largest `n1 * n2` for which the exact permutation p-value is computed.
pub const EXACT_LIMIT: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UTestResult {
    pub u_statistic: f64,
    /// Exact p when available, otherwise the normal approximation.
    pub p_value: f64,
    pub p_normal: f64,
    pub p_exact: Option<f64>,
    pub n1: usize,
    pub n2: usize,
    pub significant: bool,
}

/// Midranks (1-based, ties averaged) of `values` in pooled order.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn tie_term(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        total += t * t * t - t;
        i = j + 1;
    }
    total
}

/// `#{(i, j): a_i > b_j} + 0.5 * #{a_i == b_j}`, via midranks.
pub fn u_statistic(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let n1 = a.len() as f64;
    ranks[..a.len()].iter().sum::<f64>() - n1 * (n1 + 1.0) / 2.0
}

/// Two-sided p from the normal approximation with tie-corrected variance and
/// a continuity correction of 0.5.
pub fn normal_p_value(a: &[f64], b: &[f64]) -> f64 {
    let n1 = a.len() as f64;
    let n2 = b.len() as f64;
    let n = n1 + n2;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let mean = n1 * n2 / 2.0;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term(&pooled) / (n * (n - 1.0)));
    if !(var > 0.0) {
        return 1.0;
    }
    let dev = ((u_statistic(a, b) - mean).abs() - 0.5).max(0.0);
    let z = dev / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

/// Two-sided exact p under the permutation distribution of the pooled values
/// (ties kept as midranks): the fraction of size-`n1` subsets whose U is at
/// least as far from `n1 * n2 / 2` as the observed one.
pub fn exact_p_value(a: &[f64], b: &[f64]) -> f64 {
    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    // doubled midranks are integers
    let doubled: Vec<usize> = midranks(&pooled)
        .iter()
        .map(|r| (2.0 * r) as usize)
        .collect();
    let max_sum: usize = {
        let mut d = doubled.clone();
        d.sort_unstable_by(|x, y| y.cmp(x));
        d[..n1].iter().sum()
    };

    // ways[k][s]: number of k-subsets with doubled rank sum s
    let mut ways = vec![vec![0.0f64; max_sum + 1]; n1 + 1];
    ways[0][0] = 1.0;
    for &d in &doubled {
        for k in (1..=n1).rev() {
            let (lower, upper) = ways.split_at_mut(k);
            let prev = &lower[k - 1];
            let cur = &mut upper[0];
            for s in (d..=max_sum).rev() {
                cur[s] += prev[s - d];
            }
        }
    }

    let offset = (n1 * (n1 + 1)) as i64;
    let center = (n1 * n2) as i64;
    let observed_sum: usize = doubled[..n1].iter().sum();
    let observed = ((observed_sum as i64 - offset) - center).abs();
    let (mut extreme, mut total) = (0.0, 0.0);
    for (s, &w) in ways[n1].iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        total += w;
        if ((s as i64 - offset) - center).abs() >= observed {
            extreme += w;
        }
    }
    extreme / total
}

pub fn mann_whitney_u(a: &[f64], b: &[f64], alpha: f64) -> Result<UTestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Parameter(
            "Mann-Whitney U needs at least one value per group".into(),
        ));
    }
    let p_normal = normal_p_value(a, b);
    let p_exact = (a.len() * b.len() <= EXACT_LIMIT).then(|| exact_p_value(a, b));
    let p_value = p_exact.unwrap_or(p_normal);
    Ok(UTestResult {
        u_statistic: u_statistic(a, b),
        p_value,
        p_normal,
        p_exact,
        n1: a.len(),
        n2: b.len(),
        significant: p_value < alpha,
    })
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    ExpertLower,
    ExpertHigher,
    Equal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureComparison {
    pub feature: String,
    pub u: f64,
    pub p: f64,
    pub n1: usize,
    pub n2: usize,
    pub direction: Direction,
    pub significant: bool,
    pub expert_median: f64,
    pub nonexpert_median: f64,
}

/// Granularity of the values handed to [`compare_groups`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    #[default]
    Window,
    Image,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub granularity: Granularity,
    pub alpha: f64,
    pub features: Vec<FeatureComparison>,
}

/// Runs one U test per scalar feature (AFD, FC, AED), experts as the first sample.
pub fn compare_groups(
    expert: &[[f64; SCALAR_FEATURES]],
    nonexpert: &[[f64; SCALAR_FEATURES]],
    alpha: f64,
    granularity: Granularity,
) -> Result<GroupReport> {
    let mut features = Vec::with_capacity(SCALAR_FEATURES);
    for (k, name) in SCALAR_NAMES.iter().enumerate() {
        let a: Vec<f64> = expert.iter().map(|v| v[k]).collect();
        let b: Vec<f64> = nonexpert.iter().map(|v| v[k]).collect();
        let test = mann_whitney_u(&a, &b, alpha)?;
        let (me, mn) = (median(&a), median(&b));
        let direction = if me < mn {
            Direction::ExpertLower
        } else if me > mn {
            Direction::ExpertHigher
        } else {
            Direction::Equal
        };
        features.push(FeatureComparison {
            feature: name.to_string(),
            u: test.u_statistic,
            p: test.p_value,
            n1: test.n1,
            n2: test.n2,
            direction,
            significant: test.significant,
            expert_median: me,
            nonexpert_median: mn,
        });
    }
    Ok(GroupReport {
        granularity,
        alpha,
        features,
    })
}
